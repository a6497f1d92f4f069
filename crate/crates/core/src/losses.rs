//! Training objectives over head logits: averaged BCE, focal reweighting of
//! per-question BCE, and the pairwise AUC surrogate ranking loss.
//!
//! Every loss returns its value together with the analytic gradient with
//! respect to each logit; masked cells carry a zero gradient. BCE is computed
//! in the softplus form, never as `ln(sigmoid(x))`, so logits up to +-50 stay
//! finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};

/// A questions-by-models batch of head logits with correctness labels and a
/// presence mask. Masked-out cells take no part in any loss or gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch {
    rows: usize,
    cols: usize,
    logits: Vec<f64>,
    labels: Vec<u8>,
    mask: Vec<bool>,
}

impl LogitBatch {
    /// Row-major construction; all three buffers must hold `rows * cols`.
    pub fn new(
        rows: usize,
        cols: usize,
        logits: Vec<f64>,
        labels: Vec<u8>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let cells = rows * cols;
        if logits.len() != cells || labels.len() != cells || mask.len() != cells {
            return Err(Error::Shape(format!(
                "expected {cells} cells for a {rows}x{cols} batch, got logits {}, labels {}, mask {}",
                logits.len(),
                labels.len(),
                mask.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&c| c > 1) {
            return Err(Error::Validation(format!("label[{i}] = {} not in {{0, 1}}", labels[i])));
        }
        Ok(LogitBatch { rows, cols, logits, labels, mask })
    }

    /// A fully-present batch.
    pub fn dense(rows: usize, cols: usize, logits: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let mask = vec![true; rows * cols];
        LogitBatch::new(rows, cols, logits, labels, mask)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    #[inline]
    pub fn is_present(&self, r: usize, c: usize) -> bool {
        self.mask[self.idx(r, c)]
    }

    #[inline]
    pub fn logit(&self, r: usize, c: usize) -> f64 {
        self.logits[self.idx(r, c)]
    }

    #[inline]
    pub fn label(&self, r: usize, c: usize) -> u8 {
        self.labels[self.idx(r, c)]
    }

    fn present_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Focal loss configuration; alpha scales, gamma focuses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        FocalConfig { alpha: 0.25, gamma: 2.0 }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(Error::Argument(format!("focal alpha = {} must be > 0", self.alpha)));
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(Error::Argument(format!("focal gamma = {} must be >= 0", self.gamma)));
        }
        Ok(())
    }
}

/// Which answers an AUC-surrogate pair may span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucPooling {
    /// True/false pairs pooled over every model in the batch (the default).
    Batch,
    /// Pairs restricted to answers of the same model.
    PerModel,
}

/// Stable per-cell BCE of a logit against a binary label. The expanded
/// softplus form avoids the cancellation of `softplus(x) - x` at large x.
#[inline]
fn cell_bce(x: f64, c: u8) -> f64 {
    x.max(0.0) - f64::from(c) * x + (-x.abs()).exp().ln_1p()
}

/// Averaged binary cross-entropy over all unmasked cells.
///
/// Returns `(value, gradient)` with the gradient laid out row-major like the
/// batch. The average runs over the unmasked cell count, which matches the
/// `1/(k*n)` normalization when the batch is fully present.
pub fn bce_loss(batch: &LogitBatch) -> Result<(f64, Vec<f64>)> {
    let m = batch.present_count();
    if m == 0 {
        return Err(Error::DegenerateBatch("no unmasked cells".to_string()));
    }
    let m = m as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; batch.rows * batch.cols];
    for r in 0..batch.rows {
        for c in 0..batch.cols {
            if !batch.is_present(r, c) {
                continue;
            }
            let x = batch.logit(r, c);
            let label = batch.label(r, c);
            value += cell_bce(x, label);
            grad[batch.idx(r, c)] = (sigmoid(x) - f64::from(label)) / m;
        }
    }
    Ok((value / m, grad))
}

/// Per-question BCE: the mean cell loss of each row's unmasked cells.
///
/// Rows with no unmasked cells yield `None` and are excluded from the focal
/// reduction downstream.
pub fn per_sample_bce(batch: &LogitBatch) -> Vec<Option<f64>> {
    (0..batch.rows)
        .map(|r| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for c in 0..batch.cols {
                if batch.is_present(r, c) {
                    sum += cell_bce(batch.logit(r, c), batch.label(r, c));
                    count += 1;
                }
            }
            (count > 0).then(|| sum / count as f64)
        })
        .collect()
}

/// Focal reweighting of per-question BCE.
///
/// value = mean_j alpha * (1 - e^{-L_j})^gamma * L_j over rows with at least
/// one unmasked cell; the gradient chains through each row's mean BCE.
pub fn focal_loss(batch: &LogitBatch, cfg: &FocalConfig) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    let row_losses = per_sample_bce(batch);
    let k_eff = row_losses.iter().flatten().count();
    if k_eff == 0 {
        return Err(Error::DegenerateBatch("no effective rows".to_string()));
    }
    let k_eff = k_eff as f64;

    let mut value = 0.0;
    let mut grad = vec![0.0; batch.rows * batch.cols];
    for (r, row_loss) in row_losses.iter().enumerate() {
        let Some(l) = *row_loss else { continue };
        let u = -(-l).exp_m1(); // 1 - e^{-L}, stable near L = 0
        let w = u.powf(cfg.gamma);
        value += cfg.alpha * w * l;

        // d/dL [u^g * L] = u^g + g * u^(g-1) * e^{-L} * L; the second term
        // vanishes at g = 0 and in the L -> 0 limit for g > 0.
        let dterm = if cfg.gamma == 0.0 || u == 0.0 {
            0.0
        } else {
            cfg.gamma * u.powf(cfg.gamma - 1.0) * (-l).exp() * l
        };
        let dvalue_dl = cfg.alpha * (w + dterm) / k_eff;

        let row_count = (0..batch.cols).filter(|&c| batch.is_present(r, c)).count() as f64;
        for c in 0..batch.cols {
            if batch.is_present(r, c) {
                let x = batch.logit(r, c);
                let label = f64::from(batch.label(r, c));
                grad[batch.idx(r, c)] = dvalue_dl * (sigmoid(x) - label) / row_count;
            }
        }
    }
    Ok((value / k_eff, grad))
}

/// Pairwise AUC surrogate over true/false logit pairs, pooled batch-wide.
pub fn auc_surrogate_loss(batch: &LogitBatch) -> Result<(f64, Vec<f64>)> {
    auc_surrogate_loss_with(batch, AucPooling::Batch)
}

/// AUC surrogate with explicit pair pooling.
///
/// value = mean over pairs of sigmoid(x_false - x_true); under `PerModel`
/// pooling only same-column pairs count. Errors with [`Error::SingleClass`]
/// when no pair exists.
pub fn auc_surrogate_loss_with(batch: &LogitBatch, pooling: AucPooling) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; batch.rows * batch.cols];
    let mut value = 0.0;
    let mut pairs = 0usize;

    let col_groups: Vec<Vec<usize>> = match pooling {
        AucPooling::Batch => vec![(0..batch.cols).collect()],
        AucPooling::PerModel => (0..batch.cols).map(|c| vec![c]).collect(),
    };

    for cols in &col_groups {
        let mut true_cells = Vec::new();
        let mut false_cells = Vec::new();
        for r in 0..batch.rows {
            for &c in cols {
                if batch.is_present(r, c) {
                    if batch.label(r, c) == 1 {
                        true_cells.push(batch.idx(r, c));
                    } else {
                        false_cells.push(batch.idx(r, c));
                    }
                }
            }
        }
        pairs += true_cells.len() * false_cells.len();
        for &t in &true_cells {
            for &f in &false_cells {
                let s = sigmoid(batch.logits[f] - batch.logits[t]);
                value += s;
                let ds = s * (1.0 - s);
                grad[f] += ds;
                grad[t] -= ds;
            }
        }
    }

    if pairs == 0 {
        return Err(Error::SingleClass);
    }
    let scale = pairs as f64;
    for g in &mut grad {
        *g /= scale;
    }
    Ok((value / scale, grad))
}
