//! Auxiliary confidence model: a deterministic hashed bag-of-words encoder
//! feeding one sigmoid head per target LLM, trained with mini-batch SGD.
//!
//! Heads share nothing but the batch: head i scores the joint string of the
//! question with model i's answer. Training with a single head realizes the
//! per-model variant; training with all heads realizes the joint variant that
//! can pick up inter-model agreement. Everything is deterministic under
//! (seed, data, config): shuffling uses a seeded ChaCha stream, weights start
//! at zero, and the optimizer is plain SGD.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibrators::{apply_platt, fit_platt};
use crate::corpus::EvalSet;
use crate::error::{Error, Result};
use crate::losses::{
    auc_surrogate_loss_with, bce_loss, focal_loss, AucPooling, FocalConfig, LogitBatch,
};
use crate::math::{fnv1a64, sigmoid, OUTPUT_EPS};
use crate::metrics::ProbSeries;

/// Default feature width of the encoder.
pub const DEFAULT_DIM: usize = 768;
/// Default SGD step size. Sized for a zero-initialized linear head on
/// unit-norm hashed features rather than for a transformer backbone.
pub const DEFAULT_LEARNING_RATE: f64 = 1.0;
/// Default mini-batch size.
pub const DEFAULT_BATCH_SIZE: usize = 16;
/// Default epoch count.
pub const DEFAULT_EPOCHS: usize = 5;

/// Deterministic hashed bag-of-words text encoder.
///
/// Tokens are lowercased and whitespace-split, hashed with a seeded FNV-1a
/// into `dim` signed buckets, and the result is L2-normalized. Question and
/// answer tokens hash into distinct buckets (side-tagged), standing in for a
/// joint "question [SEP] answer" input. Equal strings always encode equally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub dim: usize,
    pub seed: u64,
    pub lowercase: bool,
}

impl FeatureEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        FeatureEncoder { dim, seed, lowercase: true }
    }

    /// Encode the joint question/answer pair into a unit-norm feature vector
    /// (zero vector when neither side has tokens).
    pub fn encode(&self, question: &str, answer: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.accumulate(&mut v, question, b'q');
        self.accumulate(&mut v, answer, b'a');
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }

    fn accumulate(&self, v: &mut [f64], text: &str, side: u8) {
        let mut buf = Vec::with_capacity(32);
        for token in text.split_whitespace() {
            buf.clear();
            buf.push(side);
            buf.push(b':');
            if self.lowercase {
                buf.extend(token.to_lowercase().as_bytes());
            } else {
                buf.extend(token.as_bytes());
            }
            let h = fnv1a64(&buf, self.seed);
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
    }
}

impl Default for FeatureEncoder {
    fn default() -> Self {
        FeatureEncoder::new(DEFAULT_DIM, 0)
    }
}

/// Which training objective drives SGD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    Focal,
    Auc,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Bce => "bce",
            LossKind::Focal => "focal",
            LossKind::Auc => "auc",
        })
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(LossKind::Bce),
            "focal" => Ok(LossKind::Focal),
            "auc" => Ok(LossKind::Auc),
            other => Err(Error::Config(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub focal: FocalConfig,
    pub auc_pooling: AucPooling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::Bce,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            focal: FocalConfig::default(),
            auc_pooling: AucPooling::Batch,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Argument(format!(
                "learning_rate = {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be >= 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be >= 1".to_string()));
        }
        self.focal.validate()
    }
}

/// One sigmoid head per model over a shared feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxModel {
    dim: usize,
    model_ids: Vec<String>,
    /// Row-major n_heads x dim.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl AuxModel {
    /// Zero-initialized model: every head starts at probability 0.5.
    pub fn zeroed(dim: usize, model_ids: Vec<String>) -> Result<Self> {
        if model_ids.is_empty() {
            return Err(Error::Argument("a model needs at least one head".to_string()));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &model_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Argument(format!("duplicate head {id:?}")));
            }
        }
        let n = model_ids.len();
        Ok(AuxModel { dim, model_ids, weights: vec![0.0; n * dim], bias: vec![0.0; n] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_heads(&self) -> usize {
        self.model_ids.len()
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Index of the head owning `model_id`.
    pub fn head_index(&self, model_id: &str) -> Result<usize> {
        self.model_ids
            .iter()
            .position(|m| m == model_id)
            .ok_or_else(|| Error::Lookup(format!("model id {model_id:?} has no trained head")))
    }

    /// Weight row of one head.
    pub fn head_weights(&self, head: usize) -> &[f64] {
        &self.weights[head * self.dim..(head + 1) * self.dim]
    }

    fn head_logit(&self, head: usize, features: &[f64]) -> f64 {
        let row = self.head_weights(head);
        let dot: f64 = row.iter().zip(features).map(|(w, x)| w * x).sum();
        dot + self.bias[head]
    }

    fn head_prob(&self, head: usize, features: &[f64]) -> f64 {
        sigmoid(self.head_logit(head, features)).clamp(OUTPUT_EPS, 1.0 - OUTPUT_EPS)
    }

    /// Per-head probabilities for one question's feature rows.
    ///
    /// `features[i]` is head i's joint-string encoding, or `None` when that
    /// model did not answer; absent heads yield `None`.
    pub fn forward(&self, features: &[Option<Vec<f64>>]) -> Result<Vec<Option<f64>>> {
        if features.len() != self.n_heads() {
            return Err(Error::Shape(format!(
                "expected {} feature rows, got {}",
                self.n_heads(),
                features.len()
            )));
        }
        features
            .iter()
            .enumerate()
            .map(|(i, row)| match row {
                None => Ok(None),
                Some(f) if f.len() == self.dim => Ok(Some(self.head_prob(i, f))),
                Some(f) => Err(Error::Shape(format!(
                    "feature row {i} has length {}, expected {}",
                    f.len(),
                    self.dim
                ))),
            })
            .collect()
    }

    /// Serialize as a one-line JSON header followed by a little-endian f64
    /// blob (weights row-major, then bias). Round-trips bit-exactly.
    pub fn save(&self, encoder_seed: u64, path: impl AsRef<Path>) -> Result<()> {
        let header = serde_json::json!({
            "dim": self.dim,
            "heads": self.model_ids,
            "seed": encoder_seed,
        });
        let mut file = std::fs::File::create(path.as_ref())?;
        writeln!(file, "{header}")?;
        for &w in self.weights.iter().chain(self.bias.iter()) {
            file.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    /// Load a model saved by [`AuxModel::save`]; returns the encoder seed too.
    pub fn load(path: impl AsRef<Path>) -> Result<(AuxModel, u64)> {
        let bytes = std::fs::read(path.as_ref())?;
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Validation("model file has no header line".to_string()))?;
        #[derive(Deserialize)]
        struct Header {
            dim: usize,
            heads: Vec<String>,
            seed: u64,
        }
        let header: Header = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| Error::Validation(format!("bad model header: {e}")))?;
        let n = header.heads.len();
        let blob = &bytes[newline + 1..];
        let expected = (n * header.dim + n) * 8;
        if blob.len() != expected {
            return Err(Error::Validation(format!(
                "model blob holds {} bytes, expected {expected}",
                blob.len()
            )));
        }
        let mut values = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
        let weights: Vec<f64> = values.by_ref().take(n * header.dim).collect();
        let bias: Vec<f64> = values.collect();
        Ok((
            AuxModel { dim: header.dim, model_ids: header.heads, weights, bias },
            header.seed,
        ))
    }
}

/// Features and label of one (record, head) cell.
type CellData = Option<(Vec<f64>, u8)>;

fn encode_cells(set: &EvalSet, enc: &FeatureEncoder, heads: &[String]) -> Vec<Vec<CellData>> {
    set.records()
        .iter()
        .map(|rec| {
            heads
                .iter()
                .map(|head| {
                    rec.answers
                        .iter()
                        .find(|a| &a.model_id == head)
                        .map(|a| (enc.encode(&rec.question, &a.answer_text), a.correctness))
                })
                .collect()
        })
        .collect()
}

fn build_batch(model: &AuxModel, cells: &[Vec<CellData>], indices: &[usize]) -> Result<LogitBatch> {
    let rows = indices.len();
    let cols = model.n_heads();
    let mut logits = vec![0.0; rows * cols];
    let mut labels = vec![0u8; rows * cols];
    let mut mask = vec![false; rows * cols];
    for (r, &idx) in indices.iter().enumerate() {
        for (c, cell) in cells[idx].iter().enumerate() {
            if let Some((features, label)) = cell {
                let at = r * cols + c;
                logits[at] = model.head_logit(c, features);
                labels[at] = *label;
                mask[at] = true;
            }
        }
    }
    LogitBatch::new(rows, cols, logits, labels, mask)
}

fn evaluate_step(
    batch: &LogitBatch,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    match cfg.loss_kind {
        LossKind::Bce => bce_loss(batch),
        LossKind::Focal => focal_loss(batch, &cfg.focal),
        LossKind::Auc => auc_surrogate_loss_with(batch, cfg.auc_pooling),
    }
}

fn apply_update(
    model: &mut AuxModel,
    cells: &[Vec<CellData>],
    indices: &[usize],
    cell_grads: &[f64],
    lr: f64,
) {
    let cols = model.n_heads();
    let dim = model.dim;
    let mut weight_grads = vec![0.0; cols * dim];
    let mut bias_grads = vec![0.0; cols];
    for (r, &idx) in indices.iter().enumerate() {
        for (c, cell) in cells[idx].iter().enumerate() {
            if let Some((features, _)) = cell {
                let g = cell_grads[r * cols + c];
                if g != 0.0 {
                    let wg = &mut weight_grads[c * dim..(c + 1) * dim];
                    for (wgi, &fi) in wg.iter_mut().zip(features) {
                        *wgi += g * fi;
                    }
                }
                bias_grads[c] += g;
            }
        }
    }
    for (w, g) in model.weights.iter_mut().zip(&weight_grads) {
        *w -= lr * g;
    }
    for (b, g) in model.bias.iter_mut().zip(&bias_grads) {
        *b -= lr * g;
    }
}

/// Train a model with one head per entry of `heads`.
///
/// Records are shuffled each epoch from a single seeded stream and walked in
/// mini-batches; a head whose model never answers simply stays at its zero
/// initialization. Under the AUC loss a single-class batch is first enlarged
/// by one more batch worth of records, then falls back to BCE for that step.
/// Returns the model and the mean step loss of each epoch.
pub fn train(
    trainset: &EvalSet,
    cfg: &TrainConfig,
    enc: &FeatureEncoder,
    heads: &[String],
) -> Result<(AuxModel, Vec<f64>)> {
    cfg.validate()?;
    if trainset.is_empty() {
        return Err(Error::Argument("training set is empty".to_string()));
    }
    let mut model = AuxModel::zeroed(enc.dim, heads.to_vec())?;
    let cells = encode_cells(trainset, enc, heads);

    let present: Vec<u8> = cells
        .iter()
        .flatten()
        .filter_map(|c| c.as_ref().map(|(_, label)| *label))
        .collect();
    if present.is_empty() {
        return Err(Error::DegenerateBatch(
            "no answers for the requested heads in the training set".to_string(),
        ));
    }
    if cfg.loss_kind == LossKind::Auc {
        let has_true = present.iter().any(|&c| c == 1);
        let has_false = present.iter().any(|&c| c == 0);
        if !has_true || !has_false {
            return Err(Error::SingleClass);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..trainset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        let mut cursor = 0usize;
        while cursor < order.len() {
            let take = cfg.batch_size.min(order.len() - cursor);
            let mut indices = order[cursor..cursor + take].to_vec();
            cursor += take;

            let mut batch = build_batch(&model, &cells, &indices)?;
            if (0..batch.rows()).all(|r| (0..batch.cols()).all(|c| !batch.is_present(r, c))) {
                continue;
            }

            let step = match evaluate_step(&batch, cfg) {
                Ok(res) => res,
                Err(Error::SingleClass) => {
                    // Enlarge once with the next batch worth of records.
                    let extra = cfg.batch_size.min(order.len() - cursor);
                    if extra > 0 {
                        indices.extend_from_slice(&order[cursor..cursor + extra]);
                        cursor += extra;
                        batch = build_batch(&model, &cells, &indices)?;
                    }
                    match evaluate_step(&batch, cfg) {
                        Ok(res) => res,
                        Err(Error::SingleClass) => bce_loss(&batch)?,
                        Err(e) => return Err(e),
                    }
                }
                Err(e) => return Err(e),
            };
            let (value, grads) = step;
            apply_update(&mut model, &cells, &indices, &grads, cfg.learning_rate);
            epoch_loss += value;
            steps += 1;
        }
        history.push(if steps == 0 { 0.0 } else { epoch_loss / steps as f64 });
    }
    Ok((model, history))
}

/// Predict one series per trained head, aligned to that model's answers in
/// record order.
pub fn predict_set(
    model: &AuxModel,
    enc: &FeatureEncoder,
    set: &EvalSet,
) -> Result<BTreeMap<String, ProbSeries>> {
    model
        .model_ids()
        .iter()
        .map(|id| Ok((id.clone(), predict_model(model, enc, set, id)?)))
        .collect()
}

/// Predict the series of a single model id.
pub fn predict_model(
    model: &AuxModel,
    enc: &FeatureEncoder,
    set: &EvalSet,
    model_id: &str,
) -> Result<ProbSeries> {
    let head = model.head_index(model_id)?;
    let mut pairs = Vec::new();
    for rec in set.records() {
        if let Some(ans) = rec.answers.iter().find(|a| a.model_id == model_id) {
            let features = enc.encode(&rec.question, &ans.answer_text);
            pairs.push((model.head_prob(head, &features), ans.correctness));
        }
    }
    ProbSeries::from_pairs(pairs)
}

/// Platt-rescale each head's test predictions with parameters fit on that
/// head's validation predictions.
pub fn calibrate_ps(
    model: &AuxModel,
    enc: &FeatureEncoder,
    val: &EvalSet,
    test: &EvalSet,
) -> Result<BTreeMap<String, ProbSeries>> {
    let mut out = BTreeMap::new();
    for id in model.model_ids() {
        let val_series = predict_model(model, enc, val, id)?;
        if val_series.is_empty() {
            return Err(Error::Fit(format!("empty validation series for head {id:?}")));
        }
        let params = fit_platt(&val_series)?;
        let test_series = predict_model(model, enc, test, id)?;
        out.insert(id.clone(), test_series.map_probs(|p| apply_platt(&params, p))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnswerEntry, CalibrationRecord};
    use crate::metrics::brier;

    fn record(qid: &str, answers: &[(&str, &str, u8)]) -> CalibrationRecord {
        CalibrationRecord {
            question_id: qid.to_string(),
            question: format!("what is {qid}"),
            dataset: "nq".to_string(),
            prompt_style: "verb".to_string(),
            answers: answers
                .iter()
                .map(|(m, text, c)| AnswerEntry {
                    model_id: m.to_string(),
                    answer_text: text.to_string(),
                    correctness: *c,
                    llm_prob: None,
                    verbalized_conf: None,
                })
                .collect(),
        }
    }

    /// Vocabulary-separable corpus: correct answers use one word family,
    /// incorrect answers another.
    fn separable_set(n: usize, seed: u64) -> EvalSet {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let correct_vocab = ["granite", "basalt", "marble", "quartz"];
        let wrong_vocab = ["fog", "mist", "haze", "smoke"];
        let records = (0..n)
            .map(|i| {
                let mut answers = Vec::new();
                for m in ["m1", "m2"] {
                    let c = u8::from(rng.gen_bool(0.5));
                    let vocab = if c == 1 { &correct_vocab } else { &wrong_vocab };
                    let w1 = vocab[rng.gen_range(0..vocab.len())];
                    let w2 = vocab[rng.gen_range(0..vocab.len())];
                    answers.push((m, format!("{w1} {w2}"), c));
                }
                record(
                    &format!("q{i}"),
                    &answers
                        .iter()
                        .map(|(m, t, c)| (*m, t.as_str(), *c))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        EvalSet::from_records(records)
    }

    #[test]
    fn encode_empty_strings_is_zero_vector() {
        let enc = FeatureEncoder::new(32, 7);
        assert!(enc.encode("", "").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn encode_is_deterministic() {
        let enc = FeatureEncoder::new(DEFAULT_DIM, 3);
        let a = enc.encode("what is basalt", "a dark volcanic rock");
        let b = enc.encode("what is basalt", "a dark volcanic rock");
        assert_eq!(a, b);
    }

    #[test]
    fn encode_is_unit_norm() {
        let enc = FeatureEncoder::new(DEFAULT_DIM, 3);
        let v = enc.encode("one two three", "four five");
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_distinguishes_disjoint_answers() {
        let enc = FeatureEncoder::default();
        let q = "what is the capital";
        let words = ["paris", "london", "berlin", "madrid", "rome", "oslo", "cairo", "lima"];
        for (i, w1) in words.iter().enumerate() {
            for w2 in &words[i + 1..] {
                let a = enc.encode(q, w1);
                let b = enc.encode(q, w2);
                assert!(a.iter().zip(&b).any(|(x, y)| x != y), "{w1} vs {w2} collide");
            }
        }
    }

    #[test]
    fn encoder_side_tags_separate_question_and_answer_tokens() {
        let enc = FeatureEncoder::new(DEFAULT_DIM, 0);
        assert_ne!(enc.encode("basalt", ""), enc.encode("", "basalt"));
    }

    #[test]
    fn forward_zero_model_is_half() {
        let model = AuxModel::zeroed(8, vec!["a".into(), "b".into()]).unwrap();
        let enc = FeatureEncoder::new(8, 0);
        let feats = vec![Some(enc.encode("q", "x")), Some(enc.encode("q", "y"))];
        let out = model.forward(&feats).unwrap();
        assert_eq!(out, vec![Some(0.5), Some(0.5)]);
    }

    #[test]
    fn forward_closed_form_logit() {
        let mut model = AuxModel::zeroed(4, vec!["a".into()]).unwrap();
        model.bias[0] = 3f64.ln();
        let out = model.forward(&[Some(vec![0.0; 4])]).unwrap();
        assert!((out[0].unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn forward_masked_head_is_absent() {
        let model = AuxModel::zeroed(4, vec!["a".into(), "b".into()]).unwrap();
        let out = model.forward(&[None, Some(vec![0.0; 4])]).unwrap();
        assert_eq!(out[0], None);
        assert!(out[1].is_some());
    }

    #[test]
    fn forward_shape_errors() {
        let model = AuxModel::zeroed(4, vec!["a".into()]).unwrap();
        assert!(model.forward(&[]).is_err());
        assert!(model.forward(&[Some(vec![0.0; 3])]).is_err());
    }

    #[test]
    fn train_zero_learning_rate_keeps_zero_weights() {
        let set = separable_set(20, 1);
        let enc = FeatureEncoder::new(64, 0);
        let cfg = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        let heads = set.model_ids().to_vec();
        let (model, history) = train(&set, &cfg, &enc, &heads).unwrap();
        assert!(model.weights().iter().all(|&w| w == 0.0));
        assert!(model.bias().iter().all(|&b| b == 0.0));
        assert_eq!(history.len(), cfg.epochs);
    }

    #[test]
    fn train_same_seed_is_bit_identical() {
        let set = separable_set(40, 2);
        let enc = FeatureEncoder::new(64, 0);
        let cfg = TrainConfig::default();
        let heads = set.model_ids().to_vec();
        let (m1, h1) = train(&set, &cfg, &enc, &heads).unwrap();
        let (m2, h2) = train(&set, &cfg, &enc, &heads).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn train_separable_reaches_low_bce() {
        let set = separable_set(200, 3);
        let enc = FeatureEncoder::default();
        let cfg = TrainConfig::default();
        let heads = set.model_ids().to_vec();
        let (model, history) = train(&set, &cfg, &enc, &heads).unwrap();
        assert!(
            *history.last().unwrap() < 0.1,
            "final epoch mean BCE = {}",
            history.last().unwrap()
        );
        // Train-set Brier should be solidly below the 0.25 chance level too.
        for series in predict_set(&model, &enc, &set).unwrap().values() {
            assert!(brier(series).unwrap() < 0.05);
        }
    }

    #[test]
    fn train_empty_set_errors() {
        let enc = FeatureEncoder::new(8, 0);
        let set = EvalSet::from_records(vec![]);
        assert!(train(&set, &TrainConfig::default(), &enc, &["m".to_string()]).is_err());
    }

    #[test]
    fn train_auc_single_class_set_errors() {
        let set = EvalSet::from_records(vec![
            record("q1", &[("m1", "granite", 1)]),
            record("q2", &[("m1", "basalt", 1)]),
        ]);
        let enc = FeatureEncoder::new(16, 0);
        let cfg = TrainConfig { loss_kind: LossKind::Auc, ..TrainConfig::default() };
        assert!(matches!(
            train(&set, &cfg, &enc, &["m1".to_string()]).unwrap_err(),
            Error::SingleClass
        ));
    }

    #[test]
    fn predict_zero_model_brier_is_quarter() {
        let set = separable_set(30, 4);
        let enc = FeatureEncoder::new(32, 0);
        let model = AuxModel::zeroed(32, set.model_ids().to_vec()).unwrap();
        for series in predict_set(&model, &enc, &set).unwrap().values() {
            assert!((brier(series).unwrap() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_single_record_series_length() {
        let set = EvalSet::from_records(vec![record("q1", &[("m1", "granite", 1), ("m2", "fog", 0)])]);
        let enc = FeatureEncoder::new(16, 0);
        let model = AuxModel::zeroed(16, set.model_ids().to_vec()).unwrap();
        let out = predict_set(&model, &enc, &set).unwrap();
        assert!(out.values().all(|s| s.len() == 1));
    }

    #[test]
    fn predict_unknown_model_is_lookup_error() {
        let set = separable_set(5, 5);
        let enc = FeatureEncoder::new(16, 0);
        let model = AuxModel::zeroed(16, vec!["m1".to_string()]).unwrap();
        assert!(matches!(
            predict_model(&model, &enc, &set, "m9").unwrap_err(),
            Error::Lookup(_)
        ));
    }

    #[test]
    fn predict_is_permutation_equivariant() {
        let set = separable_set(12, 6);
        let enc = FeatureEncoder::default();
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let heads = set.model_ids().to_vec();
        let (model, _) = train(&set, &cfg, &enc, &heads).unwrap();

        let mut reversed: Vec<_> = set.records().to_vec();
        reversed.reverse();
        let rev_set = EvalSet::from_records(reversed);

        let fwd = predict_model(&model, &enc, &set, "m1").unwrap();
        let rev = predict_model(&model, &enc, &rev_set, "m1").unwrap();
        let mut fwd_probs = fwd.probs().to_vec();
        fwd_probs.reverse();
        assert_eq!(fwd_probs, rev.probs());
    }

    #[test]
    fn calibrate_ps_empty_validation_names_head() {
        let train_set = separable_set(10, 7);
        let enc = FeatureEncoder::new(16, 0);
        let model = AuxModel::zeroed(16, train_set.model_ids().to_vec()).unwrap();
        let empty = EvalSet::from_records(vec![]);
        let err = calibrate_ps(&model, &enc, &empty, &train_set).unwrap_err();
        match err {
            Error::Fit(msg) => assert!(msg.contains("m1"), "{msg}"),
            other => panic!("expected fit error, got {other:?}"),
        }
    }

    #[test]
    fn calibrate_ps_uninformative_validation_collapses_to_constant() {
        // Zero model: every validation prob is 0.5, so the fitted map is a
        // constant sigma(b*) and all rescaled test probs coincide.
        let set = separable_set(16, 8);
        let enc = FeatureEncoder::new(16, 0);
        let model = AuxModel::zeroed(16, set.model_ids().to_vec()).unwrap();
        let out = calibrate_ps(&model, &enc, &set, &set).unwrap();
        for series in out.values() {
            let first = series.probs()[0];
            assert!(series.probs().iter().all(|&p| (p - first).abs() < 1e-12));
        }
    }

    #[test]
    fn model_save_load_round_trips_bit_exactly() {
        let set = separable_set(24, 9);
        let enc = FeatureEncoder::new(48, 11);
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let heads = set.model_ids().to_vec();
        let (model, _) = train(&set, &cfg, &enc, &heads).unwrap();

        let file = tempfile::NamedTempFile::new().unwrap();
        model.save(enc.seed, file.path()).unwrap();
        let (loaded, seed) = AuxModel::load(file.path()).unwrap();
        assert_eq!(seed, enc.seed);
        assert_eq!(model, loaded);
    }

    #[test]
    fn sgd_step_matches_first_order_loss_decrease() {
        // One record, tiny step: delta(loss) ~ -lr * |param grad|^2.
        let set = EvalSet::from_records(vec![record(
            "q1",
            &[("m1", "granite shard", 1), ("m2", "void fog", 0)],
        )]);
        let enc = FeatureEncoder::new(32, 0);
        let heads = set.model_ids().to_vec();
        let lr = 1e-4;
        let cfg = TrainConfig { learning_rate: lr, epochs: 1, ..TrainConfig::default() };

        let zero = AuxModel::zeroed(32, heads.clone()).unwrap();
        let cells = encode_cells(&set, &enc, &heads);
        let batch = build_batch(&zero, &cells, &[0]).unwrap();
        let (loss_before, cell_grads) = bce_loss(&batch).unwrap();

        // Parameter-space gradient norm: per head, grad_w = g * phi, grad_b = g.
        let mut grad_norm_sq = 0.0;
        for (c, cell) in cells[0].iter().enumerate() {
            let (features, _) = cell.as_ref().unwrap();
            let g = cell_grads[c];
            grad_norm_sq += g * g * features.iter().map(|x| x * x).sum::<f64>();
            grad_norm_sq += g * g;
        }

        let (trained, _) = train(&set, &cfg, &enc, &heads).unwrap();
        let batch_after = build_batch(&trained, &cells, &[0]).unwrap();
        let (loss_after, _) = bce_loss(&batch_after).unwrap();

        let actual = loss_after - loss_before;
        let predicted = -lr * grad_norm_sq;
        assert!(
            (actual - predicted).abs() <= 0.1 * predicted.abs(),
            "actual {actual} vs first-order {predicted}"
        );
    }

    #[test]
    fn calib_1_equals_single_head_of_joint_model_on_same_batches() {
        // Records carry only m1 answers; the joint model's extra head is
        // permanently masked, so the m1 head sees identical arithmetic.
        let records: Vec<_> = (0..30)
            .map(|i| {
                let c = (i % 3 == 0) as u8;
                let text = if c == 1 { "granite" } else { "fog" };
                record(&format!("q{i}"), &[("m1", text, c)])
            })
            .collect();
        let set = EvalSet::from_records(records);
        let enc = FeatureEncoder::new(64, 0);
        let cfg = TrainConfig::default();

        let (solo, _) = train(&set, &cfg, &enc, &["m1".to_string()]).unwrap();
        let (joint, _) =
            train(&set, &cfg, &enc, &["m1".to_string(), "ghost".to_string()]).unwrap();

        assert_eq!(solo.head_weights(0), joint.head_weights(0));
        assert_eq!(solo.bias()[0], joint.bias()[0]);
        assert!(joint.head_weights(1).iter().all(|&w| w == 0.0));
        assert_eq!(joint.bias()[1], 0.0);
    }
}
