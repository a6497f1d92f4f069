//! Non-trained baselines materialized as probability series: the LLM's own
//! sequence probability, its Platt-rescaled variant, and verbalized
//! confidence. Answers missing the requested field are skipped and counted
//! rather than failing the whole extraction; real corpora are ragged.

use serde::{Deserialize, Serialize};

use crate::calibrators::{apply_platt, fit_platt};
use crate::corpus::EvalSet;
use crate::error::{Error, Result};
use crate::metrics::ProbSeries;

/// The three ingested baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Conditional sequence probability as reported by the LLM.
    LlmProb,
    /// Sequence probability after Platt scaling fit on validation data.
    LlmProbPs,
    /// Self-reported probability of correctness (verbalized prompts only).
    Verbalized,
}

impl BaselineKind {
    fn field(self, ans: &crate::corpus::AnswerEntry) -> Option<f64> {
        match self {
            BaselineKind::LlmProb | BaselineKind::LlmProbPs => ans.llm_prob,
            BaselineKind::Verbalized => ans.verbalized_conf,
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BaselineKind::LlmProb => "llm_prob",
            BaselineKind::LlmProbPs => "llm_prob_ps",
            BaselineKind::Verbalized => "verbalized",
        })
    }
}

/// Extract one model's baseline series in record order.
///
/// Returns the series plus the number of answers skipped because the field
/// was null. Errors when no usable answer exists at all, mirroring the
/// undefined method/prompt combinations of verbalized confidence.
pub fn extract_baseline(
    set: &EvalSet,
    model_id: &str,
    kind: BaselineKind,
) -> Result<(ProbSeries, usize)> {
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for rec in set.records() {
        for ans in rec.answers.iter().filter(|a| a.model_id == model_id) {
            match kind.field(ans) {
                Some(p) => pairs.push((p, ans.correctness)),
                None => skipped += 1,
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyBaseline(format!(
            "no usable {kind} answers for model {model_id:?} ({skipped} null fields)"
        )));
    }
    Ok((ProbSeries::from_pairs(pairs)?, skipped))
}

/// Platt-rescale a model's test sequence probabilities with parameters fit on
/// its validation sequence probabilities. An empty test set yields an empty
/// series.
pub fn baseline_ps(val: &EvalSet, test: &EvalSet, model_id: &str) -> Result<ProbSeries> {
    let (val_series, _) = extract_baseline(val, model_id, BaselineKind::LlmProb)?;
    let params = fit_platt(&val_series)?;
    let test_series = match extract_baseline(test, model_id, BaselineKind::LlmProb) {
        Ok((series, _)) => series,
        Err(Error::EmptyBaseline(_)) if test.is_empty() => ProbSeries::empty(),
        Err(e) => return Err(e),
    };
    test_series.map_probs(|p| apply_platt(&params, p))
}
