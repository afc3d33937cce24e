mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use spanrel::{CombineMode, DecodingConfig, Directions, ThresholdTable, Variant, DEFAULT_SEED};
use stages::*;

/// Relation classification as bidirectional span prediction.
#[derive(Parser)]
#[command(name = "spanrel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for the only random step (mixing); recorded in output headers.
    #[arg(long, default_value_t = DEFAULT_SEED, global = true)]
    seed: u64,
    /// Worker threads for parallel stages (0: one per core).
    #[arg(long, default_value_t = 0, global = true)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Question,
    Relation,
    Token,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Question => Variant::Question,
            VariantArg::Relation => Variant::Relation,
            VariantArg::Token => Variant::Token,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Or,
    And,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionsArg {
    Both,
    FwdOnly,
}

#[derive(Args, Clone)]
struct DecodeOpts {
    #[arg(long, value_enum, default_value = "or")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "both")]
    directions: DirectionsArg,
    /// Pick the best-scoring relation even when none clears its threshold.
    /// Defaults to the schema's setting.
    #[arg(long)]
    forced_choice: bool,
    /// Count missing predictions as misses instead of failing.
    #[arg(long)]
    allow_missing: bool,
}

impl DecodeOpts {
    fn config(&self, schema_forced: bool) -> Result<DecodingConfig> {
        let config = DecodingConfig {
            mode: match self.mode {
                ModeArg::Or => CombineMode::Or,
                ModeArg::And => CombineMode::And,
            },
            directions: match self.directions {
                DirectionsArg::Both => Directions::Both,
                DirectionsArg::FwdOnly => Directions::FwdOnly,
            },
            forced_choice: self.forced_choice || schema_forced,
            allow_missing: self.allow_missing,
        };
        config.validate().map_err(|e| usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Args, Clone)]
struct RemoteOpts {
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 2)]
    retries: usize,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
}

impl RemoteOpts {
    fn args(&self) -> RemoteArgs {
        RemoteArgs {
            batch_size: self.batch_size,
            max_in_flight: self.max_in_flight,
            retries: self.retries,
            timeout_secs: self.timeout_secs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Turn an RC dataset into SQuAD 2.0 questions plus a provenance sidecar.
    Convert {
        #[arg(long)]
        input: PathBuf,
        /// Schema file, or `tacred` for the built-in one.
        #[arg(long)]
        schema: String,
        #[arg(long, value_enum, default_value = "question")]
        variant: VariantArg,
        /// Fill missing type signatures from the input's gold labels and
        /// write the resulting schema to this path.
        #[arg(long)]
        derive_schema: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Defaults to `<output stem>.provenance.json`.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Combine two SQuAD datasets.
    Mix {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Keep the datasets as two consecutive training stages.
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Answer every question of a SQuAD dataset.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        /// oracle | lexical | file:PATH | remote:URL
        #[arg(long)]
        predictor: String,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        remote: RemoteOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Pick per-template thresholds on dev predictions.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decode predictions into relation labels.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: String,
        #[arg(long)]
        predictions: PathBuf,
        /// Threshold table; without one every template uses `--threshold`.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        threshold: f64,
        #[command(flatten)]
        decode: DecodeOpts,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a decode report against gold labels.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: String,
        #[arg(long)]
        decoded: PathBuf,
        /// JSON metrics; a plain-text table is written next to it.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare OR, AND and forward-only decoding on the same predictions.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: String,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        threshold: f64,
        #[arg(long)]
        forced_choice: bool,
        #[arg(long)]
        allow_missing: bool,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// convert → predict → calibrate → decode → evaluate in one run.
    Pipeline {
        /// RC data to decode and score.
        #[arg(long)]
        input: PathBuf,
        /// RC data to calibrate on; defaults to `--input`.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        schema: String,
        #[arg(long, value_enum, default_value = "question")]
        variant: VariantArg,
        /// Fill missing type signatures from the dev (or input) gold labels;
        /// the result is written to `schema.json` in the output directory.
        #[arg(long)]
        derive_signatures: bool,
        #[arg(long)]
        predictor: String,
        #[command(flatten)]
        decode: DecodeOpts,
        #[command(flatten)]
        remote: RemoteOpts,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn thresholds_or_uniform(path: Option<&Path>, uniform: f64) -> Result<ThresholdTable> {
    match path {
        Some(p) => read_thresholds(p),
        None => {
            if !uniform.is_finite() {
                return Err(usage("--threshold must be finite"));
            }
            Ok(ThresholdTable::uniform(uniform))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Convert {
            input,
            schema,
            variant,
            derive_schema,
            output,
            sidecar,
            common,
        } => {
            let schema = load_schema_arg(&schema)?;
            require_file(&input, "input")?;
            convert(&ConvertArgs {
                input: &input,
                schema: &schema,
                derived_schema: derive_schema.as_deref(),
                variant: variant.into(),
                sidecar: &sidecar.unwrap_or_else(|| default_sidecar(&output)),
                output: &output,
                seed: common.seed,
                workers: common.workers,
            })?;
        }
        Command::Mix {
            a,
            b,
            serial,
            out_dir,
            common,
        } => {
            require_file(&a, "dataset")?;
            require_file(&b, "dataset")?;
            mix(&a, &b, serial, common.seed, &out_dir)?;
        }
        Command::Predict {
            data,
            sidecar,
            predictor,
            output,
            remote,
            ..
        } => {
            let p = make_predictor(&predictor, &remote.args())?;
            let ds = read_sp(&data, sidecar.as_deref())?;
            predict(&ds, p.as_ref(), &output)?;
        }
        Command::Calibrate {
            data,
            sidecar,
            predictions,
            output,
            ..
        } => {
            require_file(&predictions, "predictions")?;
            let ds = read_sp(&data, sidecar.as_deref())?;
            calibrate(&ds, &read_predictions(&predictions)?, &output)?;
        }
        Command::Decode {
            input,
            schema,
            predictions,
            thresholds,
            threshold,
            decode: opts,
            output,
            common,
        } => {
            let schema = load_schema_arg(&schema)?;
            let config = opts.config(schema.forced_choice())?;
            require_file(&input, "input")?;
            require_file(&predictions, "predictions")?;
            let table = thresholds_or_uniform(thresholds.as_deref(), threshold)?;
            decode(&DecodeArgs {
                rcs: &read_rc(&input)?,
                schema: &schema,
                preds: &read_predictions(&predictions)?,
                thresholds: &table,
                config,
                seed: common.seed,
                workers: common.workers,
                output: &output,
            })?;
        }
        Command::Evaluate {
            input,
            schema,
            decoded,
            output,
            common,
        } => {
            let schema = load_schema_arg(&schema)?;
            require_file(&input, "input")?;
            let decoded = read_decoded(&decoded)?;
            evaluate(&read_rc(&input)?, &schema, &decoded, common.seed, &output)?;
        }
        Command::Report {
            input,
            schema,
            predictions,
            thresholds,
            threshold,
            forced_choice,
            allow_missing,
            output,
            common,
        } => {
            let schema = load_schema_arg(&schema)?;
            require_file(&input, "input")?;
            require_file(&predictions, "predictions")?;
            let table = thresholds_or_uniform(thresholds.as_deref(), threshold)?;
            report(&ReportArgs {
                rcs: &read_rc(&input)?,
                schema: &schema,
                preds: &read_predictions(&predictions)?,
                thresholds: &table,
                base: DecodingConfig {
                    forced_choice: forced_choice || schema.forced_choice(),
                    allow_missing,
                    ..Default::default()
                },
                seed: common.seed,
                workers: common.workers,
                output: &output,
            })?;
        }
        Command::Pipeline {
            input,
            dev,
            schema,
            variant,
            derive_signatures,
            predictor,
            decode: opts,
            remote,
            out_dir,
            common,
        } => {
            let schema = load_schema_arg(&schema)?;
            let config = opts.config(schema.forced_choice())?;
            let predictor = make_predictor(&predictor, &remote.args())?;
            require_file(&input, "input")?;
            if let Some(d) = &dev {
                require_file(d, "dev input")?;
            }
            pipeline(Pipeline {
                input: &input,
                dev: dev.as_deref(),
                schema: &schema,
                variant: variant.into(),
                derive_signatures,
                predictor: predictor.as_ref(),
                config,
                out_dir: &out_dir,
                common,
            })?;
        }
    }
    Ok(())
}

struct Pipeline<'a> {
    input: &'a Path,
    dev: Option<&'a Path>,
    schema: &'a spanrel::RelationSchema,
    variant: Variant,
    derive_signatures: bool,
    predictor: &'a dyn spanrel::Predictor,
    config: DecodingConfig,
    out_dir: &'a Path,
    common: Common,
}

/// Writes into `out_dir`: `{test,dev}.json` with sidecars, `{test,dev}.predictions.json`,
/// `thresholds.json`, `decode.json`, `metrics.{json,txt}` and, when deriving,
/// `schema.json`.
fn pipeline(p: Pipeline) -> Result<()> {
    let file = |name: &str| p.out_dir.join(name);
    let rcs = read_rc(p.input)?;
    let schema = if p.derive_signatures {
        let source = match p.dev {
            Some(dev) => read_rc(dev)?,
            None => rcs.clone(),
        };
        derive_schema(&source, p.schema, &file("schema.json"))?
    } else {
        p.schema.clone()
    };
    let convert_one = |input: &Path, stem: &str| {
        convert(&ConvertArgs {
            input,
            schema: &schema,
            derived_schema: None,
            variant: p.variant,
            output: &file(&format!("{stem}.json")),
            sidecar: &file(&format!("{stem}.provenance.json")),
            seed: p.common.seed,
            workers: p.common.workers,
        })
    };
    let test_sp = convert_one(p.input, "test")?;
    let test_preds = predict(&test_sp, p.predictor, &file("test.predictions.json"))?;
    let thresholds = match p.dev {
        Some(dev) => {
            let dev_sp = convert_one(dev, "dev")?;
            let preds = predict(&dev_sp, p.predictor, &file("dev.predictions.json"))?;
            calibrate(&dev_sp, &preds, &file("thresholds.json"))?
        }
        None => {
            tracing::warn!(stage = "calibrate", "no dev set given; calibrating on the evaluation input");
            calibrate(&test_sp, &test_preds, &file("thresholds.json"))?
        }
    };
    let decoded = decode(&DecodeArgs {
        rcs: &rcs,
        schema: &schema,
        preds: &test_preds,
        thresholds: &thresholds,
        config: p.config,
        seed: p.common.seed,
        workers: p.common.workers,
        output: &file("decode.json"),
    })?;
    evaluate(&rcs, &schema, &decoded, p.common.seed, &file("metrics.json"))?;
    Ok(())
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("SPANREL_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let is_usage = e.downcast_ref::<UsageError>().is_some();
            tracing::error!(error = %format!("{e:#}"), "failed");
            eprintln!("error: {e:#}");
            if is_usage {
                eprintln!("run `spanrel --help` for usage");
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
