//! One function per pipeline stage. `pipeline` chains the same functions, so
//! its files are byte-identical to running the stages one by one.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde_json::json;

use spanrel::decode::{decode_report_file, parse_decode_report, serialize_decode_report, DecodeReportFile};
use spanrel::eval::{gold_flags, gold_labels, render_table, AblationRow};
use spanrel::io::{read_file, to_json_bytes, write_atomic};
use spanrel::mix::{write_serial, write_unified};
use spanrel::predict::parse_predictions;
use spanrel::squad::{attach_provenance, parse_provenance, serialize_provenance};
use spanrel::*;

/// Bad invocation: exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

/// `data.json` → `data.provenance.json`.
pub fn default_sidecar(data: &Path) -> PathBuf {
    let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    data.with_file_name(format!("{stem}.provenance.json"))
}

/// `tacred` names the built-in schema; anything else is a path.
pub fn load_schema_arg(arg: &str) -> Result<RelationSchema> {
    if arg == "tacred" {
        return Ok(RelationSchema::tacred());
    }
    let path = Path::new(arg);
    require_file(path, "schema")?;
    Ok(load_schema(path)?)
}

pub fn read_rc(path: &Path) -> Result<Vec<RcInstance>> {
    require_file(path, "input")?;
    parse_rc_dataset(&read_file(path)?).with_context(|| format!("reading {}", path.display()))
}

/// SQuAD file plus its provenance sidecar when one exists.
pub fn read_sp(path: &Path, sidecar: Option<&Path>) -> Result<SpDataset> {
    require_file(path, "dataset")?;
    let ds = parse_squad(&read_file(path)?).with_context(|| format!("reading {}", path.display()))?;
    let side = sidecar.map(Path::to_path_buf).unwrap_or_else(|| default_sidecar(path));
    if sidecar.is_some() {
        require_file(&side, "sidecar")?;
    }
    if !side.is_file() {
        return Ok(ds);
    }
    let file = parse_provenance(&read_file(&side)?).with_context(|| format!("reading {}", side.display()))?;
    Ok(attach_provenance(ds, &file)?)
}

/// Fills missing type signatures from the gold labels of `rcs` and writes
/// the finished schema to `output` for the later stages.
pub fn derive_schema(rcs: &[RcInstance], schema: &RelationSchema, output: &Path) -> Result<RelationSchema> {
    let derived = derive_compatibility(rcs, schema)?;
    write_atomic(output, format!("{}\n", derived.to_json()).as_bytes())?;
    tracing::info!(stage = "convert", output = %output.display(), "wrote derived schema");
    Ok(derived)
}

pub struct ConvertArgs<'a> {
    pub input: &'a Path,
    pub schema: &'a RelationSchema,
    /// Derive missing signatures from the input and write the schema here.
    pub derived_schema: Option<&'a Path>,
    pub variant: Variant,
    pub output: &'a Path,
    pub sidecar: &'a Path,
    pub seed: u64,
    pub workers: usize,
}

pub fn convert(a: &ConvertArgs) -> Result<SpDataset> {
    let rcs = read_rc(a.input)?;
    let derived;
    let schema = match a.derived_schema {
        Some(path) => {
            derived = derive_schema(&rcs, a.schema, path)?;
            &derived
        }
        None => a.schema,
    };
    let source = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let (ds, summary) = reduce_dataset(&rcs, schema, a.variant, &source, a.workers)?;
    write_atomic(a.output, &serialize_squad(&ds))?;
    write_atomic(a.sidecar, &serialize_provenance(&ds, Some(a.seed))?)?;
    tracing::info!(
        stage = "convert",
        rc_instances = summary.rc_instances,
        sp_instances = summary.sp_instances,
        positives = summary.positives,
        negatives = summary.negatives,
        skipped = summary.skipped,
        gold_incompatible = summary.gold_incompatible,
        output = %a.output.display(),
        "converted"
    );
    Ok(ds)
}

pub fn mix(a: &Path, b: &Path, serial: bool, seed: u64, out_dir: &Path) -> Result<()> {
    let da = read_sp(a, None)?;
    let db = read_sp(b, None)?;
    let manifest = if serial {
        let m = mix_serial(&da, &db);
        for w in &m.warnings {
            tracing::warn!(stage = "mix", "{w}");
        }
        write_serial(out_dir, &m, seed)?
    } else {
        write_unified(out_dir, &mix_unified(&da, &db, seed)?, seed)?
    };
    tracing::info!(stage = "mix", stages = manifest.stages.len(), seed, out_dir = %out_dir.display(), "mixed");
    Ok(())
}

pub struct RemoteArgs {
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub retries: usize,
    pub timeout_secs: u64,
}

pub fn make_predictor(spec: &str, remote: &RemoteArgs) -> Result<Box<dyn Predictor>> {
    Ok(match spec.split_once(':') {
        _ if spec == "oracle" => Box::new(OraclePredictor),
        _ if spec == "lexical" => Box::new(LexicalPredictor),
        Some(("file", path)) => {
            require_file(Path::new(path), "prediction file")?;
            Box::new(FilePredictor { path: path.into() })
        }
        Some(("remote", url)) => Box::new(RemotePredictor {
            config: RemoteConfig {
                batch_size: remote.batch_size,
                max_in_flight: remote.max_in_flight,
                retries: remote.retries,
                timeout: Duration::from_secs(remote.timeout_secs),
                ..RemoteConfig::new(url)
            },
        }),
        _ => return Err(usage(format!("unknown predictor {spec:?}; use oracle, lexical, file:PATH or remote:URL"))),
    })
}

pub fn predict(ds: &SpDataset, predictor: &dyn Predictor, output: &Path) -> Result<PredictionSet> {
    let set = predictor.predict(ds)?;
    write_atomic(output, &serialize_predictions(&set))?;
    tracing::info!(stage = "predict", source = %set.meta.source, predictions = set.len(), output = %output.display(), "predicted");
    Ok(set)
}

pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    require_file(path, "predictions")?;
    parse_predictions(&read_file(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn calibrate(dev: &SpDataset, preds: &PredictionSet, output: &Path) -> Result<ThresholdTable> {
    let cal = calibrate_thresholds(dev, preds)?;
    write_atomic(output, &cal.table.to_json())?;
    tracing::info!(
        stage = "calibrate",
        templates = cal.per_template.len(),
        global_threshold = cal.global.threshold,
        global_dev_f1 = cal.global.f1,
        output = %output.display(),
        "calibrated"
    );
    Ok(cal.table)
}

pub fn read_thresholds(path: &Path) -> Result<ThresholdTable> {
    require_file(path, "threshold table")?;
    ThresholdTable::from_json(&read_file(path)?).with_context(|| format!("reading {}", path.display()))
}

pub struct DecodeArgs<'a> {
    pub rcs: &'a [RcInstance],
    pub schema: &'a RelationSchema,
    pub preds: &'a PredictionSet,
    pub thresholds: &'a ThresholdTable,
    pub config: DecodingConfig,
    pub seed: u64,
    pub workers: usize,
    pub output: &'a Path,
}

pub fn decode(a: &DecodeArgs) -> Result<DecodeReportFile> {
    let report = decode_dataset(a.rcs, a.schema, a.preds, a.thresholds, &a.config, a.workers)?;
    write_atomic(a.output, &serialize_decode_report(&report, Some(a.seed)))?;
    let c = report.counters;
    tracing::info!(
        stage = "decode",
        instances = c.instances,
        multi_present = c.multi_present,
        multi_present_rate = c.multi_present_rate,
        forced = c.forced,
        missing_predictions = c.missing_predictions,
        output = %a.output.display(),
        "decoded"
    );
    Ok(decode_report_file(&report, Some(a.seed)))
}

pub fn read_decoded(path: &Path) -> Result<DecodeReportFile> {
    require_file(path, "decode report")?;
    parse_decode_report(&read_file(path)?).with_context(|| format!("reading {}", path.display()))
}

/// `metrics.json` next to a plain-text `metrics.txt`.
fn text_sibling(output: &Path) -> PathBuf {
    output.with_extension("txt")
}

pub fn evaluate(
    rcs: &[RcInstance],
    schema: &RelationSchema,
    decoded: &DecodeReportFile,
    seed: u64,
    output: &Path,
) -> Result<AblationRow> {
    let rc = evaluate_rc(&gold_labels(rcs, schema.null_label()), &decoded.labels(), schema.null_label())?;
    let cre = if !rcs.is_empty() && rcs.iter().all(|r| r.gold.is_some()) {
        Some(evaluate_cre(&gold_flags(rcs)?, &decoded.binary_predictions()?)?)
    } else {
        None
    };
    let label = match (decoded.config.mode, decoded.config.directions) {
        (_, Directions::FwdOnly) => "Single Question".to_string(),
        (mode, Directions::Both) => mode.to_string(),
    };
    let row = AblationRow {
        label,
        config: decoded.config,
        rc,
        cre,
        multi_present: decoded.counters.multi_present,
    };
    let doc = json!({ "version": 1, "seed": seed, "rows": [&row] });
    write_atomic(output, &to_json_bytes(&doc))?;
    write_atomic(text_sibling(output), render_table(std::slice::from_ref(&row)).as_bytes())?;
    tracing::info!(
        stage = "evaluate",
        precision = rc.precision,
        recall = rc.recall,
        f1 = rc.f1,
        output = %output.display(),
        "evaluated"
    );
    Ok(row)
}

pub struct ReportArgs<'a> {
    pub rcs: &'a [RcInstance],
    pub schema: &'a RelationSchema,
    pub preds: &'a PredictionSet,
    pub thresholds: &'a ThresholdTable,
    pub base: DecodingConfig,
    pub seed: u64,
    pub workers: usize,
    pub output: &'a Path,
}

pub fn report(a: &ReportArgs) -> Result<AblationReport> {
    let r = ablation_report(a.rcs, a.schema, a.preds, a.thresholds, &a.base, a.workers, Some(a.seed))?;
    write_atomic(a.output, &to_json_bytes(&r))?;
    write_atomic(text_sibling(a.output), render_table(&r.rows).as_bytes())?;
    let c = r.subset_checks;
    if c.and_not_in_or > 0 || c.fwd_not_in_or > 0 {
        tracing::error!(stage = "report", and_not_in_or = c.and_not_in_or, fwd_not_in_or = c.fwd_not_in_or, "subset law violated");
    }
    tracing::info!(stage = "report", rows = r.rows.len(), output = %a.output.display(), "reported");
    Ok(r)
}
