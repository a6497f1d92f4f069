//! JSONL corpora of LLM generations: ingestion, validation, splitting, grouping.
//!
//! One line per question. Each record carries the answers of one or more LLMs
//! together with precomputed binary correctness labels and the optional
//! baseline confidences (`llm_prob`, `verbalized_conf`). Correctness is always
//! ingested, never computed here; judging is an external concern.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One LLM's answer to a question, with its ingested correctness label.
///
/// Unknown keys are rejected to catch schema drift early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerEntry {
    pub model_id: String,
    pub answer_text: String,
    /// Binary correctness, 0 or 1.
    pub correctness: u8,
    /// Conditional sequence probability of the answer, when available.
    pub llm_prob: Option<f64>,
    /// Self-reported probability of correctness, when available.
    pub verbalized_conf: Option<f64>,
}

impl AnswerEntry {
    /// Correctness as a float label.
    pub fn label(&self) -> f64 {
        f64::from(self.correctness)
    }
}

/// One question with its per-LLM answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRecord {
    pub question_id: String,
    pub question: String,
    pub dataset: String,
    pub prompt_style: String,
    pub answers: Vec<AnswerEntry>,
}

/// Closed tag vocabularies for `prompt_style` and `dataset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub prompt_styles: BTreeSet<String>,
    pub datasets: BTreeSet<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary {
            prompt_styles: ["verb", "zeroshot", "cot", "fewshot"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            datasets: ["triviaqa", "sciq", "wikiqa", "nq"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// A validated collection of records plus the model identities they cover.
///
/// Immutable after construction; `model_ids` is the union of per-answer model
/// ids in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    records: Vec<CalibrationRecord>,
    model_ids: Vec<String>,
}

impl EvalSet {
    /// Build a set from already-validated records, recomputing `model_ids`.
    pub fn from_records(records: Vec<CalibrationRecord>) -> Self {
        let mut model_ids = Vec::new();
        let mut seen = HashSet::new();
        for rec in &records {
            for ans in &rec.answers {
                if seen.insert(ans.model_id.clone()) {
                    model_ids.push(ans.model_id.clone());
                }
            }
        }
        EvalSet { records, model_ids }
    }

    pub fn records(&self) -> &[CalibrationRecord] {
        &self.records
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    /// Number of questions in the set.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records filtered to one (dataset, prompt_style) pair, original order kept.
    pub fn filter_group(&self, dataset: &str, prompt_style: &str) -> EvalSet {
        EvalSet::from_records(
            self.records
                .iter()
                .filter(|r| r.dataset == dataset && r.prompt_style == prompt_style)
                .cloned()
                .collect(),
        )
    }

    /// Distinct (dataset, prompt_style) pairs present, in sorted order.
    pub fn group_keys(&self) -> Vec<(String, String)> {
        let mut keys: BTreeSet<(String, String)> = BTreeSet::new();
        for r in &self.records {
            keys.insert((r.dataset.clone(), r.prompt_style.clone()));
        }
        keys.into_iter().collect()
    }
}

/// Grouping axis for aggregate analysis: one cell per dataset x prompt x model.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfigKey {
    pub dataset: String,
    pub prompt_style: String,
    pub model_id: String,
}

impl ConfigKey {
    pub fn new(dataset: &str, prompt_style: &str, model_id: &str) -> Self {
        ConfigKey {
            dataset: dataset.to_string(),
            prompt_style: prompt_style.to_string(),
            model_id: model_id.to_string(),
        }
    }
}

impl std::fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.dataset, self.prompt_style, self.model_id)
    }
}

/// Position of one answer inside an `EvalSet`: (record index, answer index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnswerRef {
    pub record: usize,
    pub answer: usize,
}

fn validate_optional_prob(name: &str, value: Option<f64>, line: usize, qid: &str) -> Result<()> {
    if let Some(p) = value {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::Validation(format!(
                "line {line}: record {qid:?}: {name} = {p} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

fn validate_record(rec: &CalibrationRecord, line: usize, vocab: &Vocabulary) -> Result<()> {
    let qid = &rec.question_id;
    if rec.question_id.is_empty() {
        return Err(Error::Validation(format!("line {line}: empty question_id")));
    }
    if rec.answers.is_empty() {
        return Err(Error::Validation(format!(
            "line {line}: record {qid:?} has no answers"
        )));
    }
    if !vocab.prompt_styles.contains(&rec.prompt_style) {
        return Err(Error::Validation(format!(
            "line {line}: record {qid:?}: unknown prompt_style {:?} (expected one of {:?})",
            rec.prompt_style, vocab.prompt_styles
        )));
    }
    if !vocab.datasets.contains(&rec.dataset) {
        return Err(Error::Validation(format!(
            "line {line}: record {qid:?}: unknown dataset {:?} (expected one of {:?})",
            rec.dataset, vocab.datasets
        )));
    }
    let mut models_in_record = HashSet::new();
    for ans in &rec.answers {
        if ans.model_id.is_empty() {
            return Err(Error::Validation(format!(
                "line {line}: record {qid:?}: empty model_id"
            )));
        }
        if !models_in_record.insert(ans.model_id.as_str()) {
            return Err(Error::Validation(format!(
                "line {line}: record {qid:?}: duplicate model_id {:?}",
                ans.model_id
            )));
        }
        if ans.correctness > 1 {
            return Err(Error::Validation(format!(
                "line {line}: record {qid:?}: correctness = {} not in {{0, 1}}",
                ans.correctness
            )));
        }
        validate_optional_prob("llm_prob", ans.llm_prob, line, qid)?;
        validate_optional_prob("verbalized_conf", ans.verbalized_conf, line, qid)?;
    }
    Ok(())
}

/// Load a JSONL corpus with the default tag vocabulary.
pub fn load_records(path: impl AsRef<Path>) -> Result<EvalSet> {
    load_records_with(path, &Vocabulary::default())
}

/// Load a JSONL corpus, validating every line against `vocab`.
///
/// Lines are 1-indexed in errors. Duplicate (question_id, model_id) pairs
/// across the whole file are rejected.
pub fn load_records_with(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<EvalSet> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut seen_pairs: HashSet<(String, String)> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CalibrationRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        validate_record(&rec, line_no, vocab)?;
        for ans in &rec.answers {
            let pair = (rec.question_id.clone(), ans.model_id.clone());
            if !seen_pairs.insert(pair) {
                return Err(Error::Validation(format!(
                    "line {line_no}: duplicate (question_id, model_id) = ({:?}, {:?})",
                    rec.question_id, ans.model_id
                )));
            }
        }
        records.push(rec);
    }
    Ok(EvalSet::from_records(records))
}

/// Serialize a set back to JSONL, one record per line, optional fields as null.
pub fn to_jsonl(set: &EvalSet) -> Result<String> {
    let mut out = String::new();
    for rec in set.records() {
        out.push_str(
            &serde_json::to_string(rec)
                .map_err(|e| Error::Validation(format!("serialize: {e}")))?,
        );
        out.push('\n');
    }
    Ok(out)
}

/// Write a set to a JSONL file.
pub fn save_records(set: &EvalSet, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(to_jsonl(set)?.as_bytes())?;
    Ok(())
}

/// Deterministically shuffle and partition a set into train/val/test.
///
/// Sizes are `floor(k * train_frac)` and `floor(k * val_frac)`; the remainder
/// is the test set. The three outputs are disjoint and cover the input.
pub fn split(set: EvalSet, train_frac: f64, val_frac: f64, seed: u64) -> Result<(EvalSet, EvalSet, EvalSet)> {
    for (name, f) in [("train_frac", train_frac), ("val_frac", val_frac)] {
        if !(0.0..=1.0).contains(&f) || f.is_nan() {
            return Err(Error::Argument(format!("{name} = {f} outside [0, 1]")));
        }
    }
    if train_frac + val_frac > 1.0 {
        return Err(Error::Argument(format!(
            "train_frac + val_frac = {} exceeds 1",
            train_frac + val_frac
        )));
    }
    let k = set.len();
    let n_train = (k as f64 * train_frac).floor() as usize;
    let n_val = (k as f64 * val_frac).floor() as usize;
    split_counts(set, n_train, n_val, seed)
}

/// Partition by absolute counts; what remains after `n_train + n_val` is test.
pub fn split_counts(set: EvalSet, n_train: usize, n_val: usize, seed: u64) -> Result<(EvalSet, EvalSet, EvalSet)> {
    let k = set.len();
    if n_train + n_val > k {
        return Err(Error::Argument(format!(
            "n_train + n_val = {} exceeds record count {k}",
            n_train + n_val
        )));
    }
    let mut records = set.records;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let rest = records.split_off(n_train + n_val);
    let val = records.split_off(n_train);
    Ok((
        EvalSet::from_records(records),
        EvalSet::from_records(val),
        EvalSet::from_records(rest),
    ))
}

/// Group every answer of every record under its (dataset, prompt, model) key.
///
/// Each answer appears under exactly one key; keys iterate lexicographically.
pub fn group_by_config(set: &EvalSet) -> BTreeMap<ConfigKey, Vec<AnswerRef>> {
    let mut map: BTreeMap<ConfigKey, Vec<AnswerRef>> = BTreeMap::new();
    for (ri, rec) in set.records().iter().enumerate() {
        for (ai, ans) in rec.answers.iter().enumerate() {
            let key = ConfigKey::new(&rec.dataset, &rec.prompt_style, &ans.model_id);
            map.entry(key).or_default().push(AnswerRef { record: ri, answer: ai });
        }
    }
    map
}
