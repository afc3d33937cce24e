//! Relation classification recast as bidirectional span prediction.
//!
//! Each labeled RC instance becomes two questions per type-compatible
//! relation, one asking for the object given the subject and one the other
//! way round. A span predictor answers them and the answers are decoded back
//! into a relation label.
//!
//! ```
//! use spanrel::{reduce_instance, RcInstance, RelationSchema, TokenSpan, Variant};
//!
//! let rc = RcInstance {
//!     id: "e1".into(),
//!     tokens: ["John", "was", "born", "on", "1991"].map(String::from).to_vec(),
//!     subj: TokenSpan::new(0, 0),
//!     obj: TokenSpan::new(4, 4),
//!     subj_type: "PERSON".into(),
//!     obj_type: "DATE".into(),
//!     relation: "per:date_of_birth".into(),
//!     gold: None,
//! };
//! let out = reduce_instance(&rc, &RelationSchema::tacred(), Variant::Question).unwrap();
//! assert_eq!(out.instances[0].question, "When was John born?");
//! ```

pub mod decode;
pub mod error;
pub mod eval;
pub mod io;
pub mod mix;
pub mod predict;
pub mod rc;
pub mod reduction;
pub mod schema;
pub mod span;
pub mod squad;
pub mod synth;

pub use decode::{
    calibrate_thresholds, decode_binary, decode_dataset, decode_multiclass, question_hit, spans_compatible,
    sweep_threshold, Calibration, CalibrationPoint, CombineMode, DecodeReport, DecodingConfig, Directions,
    EntitySpans, InstanceDecision, RelationVerdict, SweepResult, ThresholdTable,
};
pub use error::{Error, Result};
pub use eval::{ablation_report, evaluate_cre, evaluate_rc, AblationReport, CreMetrics, RcMetrics};
pub use mix::{mix_serial, mix_unified, MixMode, DEFAULT_SEED};
pub use predict::{
    lexical_predict, oracle_predict, parse_predictions, remote_predict, serialize_predictions, FilePredictor,
    LexicalPredictor, OraclePredictor, PredictionSet, Predictor, RemoteConfig, RemotePredictor, SpanPrediction,
};
pub use rc::{parse_rc_dataset, serialize_rc_dataset, RcInstance};
pub use reduction::{reduce_dataset, reduce_instance, Answer, Provenance, SpDataset, SpInstance};
pub use schema::{derive_compatibility, load_schema, Direction, RelationDef, RelationSchema, Variant};
pub use span::{render_context, CharSpan, TokenSpan};
pub use squad::{parse_squad, serialize_squad};
