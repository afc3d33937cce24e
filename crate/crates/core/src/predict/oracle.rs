use super::{PredictionSet, Predictor, SpanPrediction};
use crate::error::{Error, Result};
use crate::reduction::SpDataset;

/// Answers every question with its gold answer: margin +2 when answerable,
/// −2 otherwise.
pub fn oracle_predict(ds: &SpDataset) -> Result<PredictionSet> {
    let mut set = PredictionSet::new("oracle");
    for inst in &ds.instances {
        if inst.provenance.is_none() {
            return Err(Error::MissingProvenance(inst.qid.clone()));
        }
        let pred = match &inst.answer {
            Some(a) => SpanPrediction {
                qid: inst.qid.clone(),
                text: a.text.clone(),
                char_span: Some(a.span),
                span_score: 1.0,
                null_score: -1.0,
            },
            None => SpanPrediction::no_answer(inst.qid.clone(), -1.0, 1.0),
        };
        set.insert(pred)?;
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, ds: &SpDataset) -> Result<PredictionSet> {
        oracle_predict(ds)
    }
}
