//! Calibration metrics: ECE (squared and absolute modes), temperature-scaled
//! ECE, Brier score, selective accuracy-coverage AUC, and reliability bins.
//!
//! All functions are pure; every metric except `reliability_bins` rejects an
//! empty series as undefined.

use serde::{Deserialize, Serialize};

use crate::calibrators::{apply_temperature, fit_temperature};
use crate::error::{Error, Result};

/// Aligned predicted probabilities and binary correctness labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSeries {
    probs: Vec<f64>,
    labels: Vec<u8>,
}

impl ProbSeries {
    /// Validates equal lengths, probabilities in [0, 1] and labels in {0, 1}.
    pub fn new(probs: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(Error::Shape(format!(
                "probs length {} != labels length {}",
                probs.len(),
                labels.len()
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(Error::Validation(format!("prob[{i}] = {p} outside [0, 1]")));
            }
        }
        for (i, &c) in labels.iter().enumerate() {
            if c > 1 {
                return Err(Error::Validation(format!("label[{i}] = {c} not in {{0, 1}}")));
            }
        }
        Ok(ProbSeries { probs, labels })
    }

    pub fn empty() -> Self {
        ProbSeries { probs: Vec::new(), labels: Vec::new() }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Mean correctness over the series.
    pub fn accuracy(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::UndefinedMetric("accuracy of empty series"));
        }
        Ok(self.labels.iter().map(|&c| f64::from(c)).sum::<f64>() / self.len() as f64)
    }

    /// Same labels, probabilities transformed pointwise.
    pub fn map_probs(&self, f: impl Fn(f64) -> f64) -> Result<ProbSeries> {
        ProbSeries::new(self.probs.iter().map(|&p| f(p)).collect(), self.labels.clone())
    }
}

/// How per-bin confidence/accuracy gaps are aggregated into ECE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EceMode {
    /// Weighted average of the squared gap (the default here).
    Squared,
    /// Weighted average of the absolute gap (the common external convention).
    Abs,
}

/// One uniform-width reliability bin over [lower, upper).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub fraction: f64,
    pub mean_confidence: f64,
    pub mean_accuracy: f64,
}

/// Reliability-diagram data: uniform bins over [0, 1], last bin closed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedReliability {
    pub bins: Vec<ReliabilityBin>,
}

impl BinnedReliability {
    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    /// CSV with header `bin_lower,bin_upper,count,fraction,mean_conf,mean_acc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lower,bin_upper,count,fraction,mean_conf,mean_acc\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.lower, b.upper, b.count, b.fraction, b.mean_confidence, b.mean_accuracy
            ));
        }
        out
    }
}

/// Bin index under the half-open convention; 1.0 lands in the last bin.
#[inline]
fn bin_index(p: f64, n_bins: usize) -> usize {
    ((p * n_bins as f64) as usize).min(n_bins - 1)
}

/// Expected calibration error in the squared-gap form.
pub fn ece(series: &ProbSeries, n_bins: usize) -> Result<f64> {
    ece_mode(series, n_bins, EceMode::Squared)
}

/// Expected calibration error with an explicit gap mode.
pub fn ece_mode(series: &ProbSeries, n_bins: usize, mode: EceMode) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::UndefinedMetric("ece of empty series"));
    }
    if n_bins == 0 {
        return Err(Error::Argument("n_bins must be >= 1".to_string()));
    }
    let n = series.len() as f64;
    let mut conf_sum = vec![0.0; n_bins];
    let mut acc_sum = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&p, &c) in series.probs().iter().zip(series.labels()) {
        let b = bin_index(p, n_bins);
        conf_sum[b] += p;
        acc_sum[b] += f64::from(c);
        counts[b] += 1;
    }
    let mut total = 0.0;
    for b in 0..n_bins {
        if counts[b] == 0 {
            continue;
        }
        let m = counts[b] as f64;
        let gap = acc_sum[b] / m - conf_sum[b] / m;
        let term = match mode {
            EceMode::Squared => gap * gap,
            EceMode::Abs => gap.abs(),
        };
        total += m / n * term;
    }
    Ok(total)
}

/// ECE after rescaling the series by a temperature fit on the series itself.
pub fn ece_t(series: &ProbSeries, n_bins: usize) -> Result<f64> {
    ece_t_mode(series, n_bins, EceMode::Squared)
}

/// Temperature-scaled ECE with an explicit gap mode.
pub fn ece_t_mode(series: &ProbSeries, n_bins: usize, mode: EceMode) -> Result<f64> {
    let temp = fit_temperature(series)?;
    let rescaled = series.map_probs(|p| apply_temperature(&temp, p))?;
    ece_mode(&rescaled, n_bins, mode)
}

/// Mean squared error between predicted probabilities and correctness.
pub fn brier(series: &ProbSeries) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::UndefinedMetric("brier of empty series"));
    }
    let sum: f64 = series
        .probs()
        .iter()
        .zip(series.labels())
        .map(|(&p, &c)| {
            let d = p - f64::from(c);
            d * d
        })
        .sum();
    Ok(sum / series.len() as f64)
}

/// Area under the selective accuracy-coverage curve.
///
/// Answers are covered most-confident first (ties broken by input index); the
/// curve value at coverage k/N is the accuracy of the top-k, and the area is
/// the mean of those prefix accuracies.
pub fn selective_auc(series: &ProbSeries) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::UndefinedMetric("selective_auc of empty series"));
    }
    let n = series.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        series.probs()[b]
            .partial_cmp(&series.probs()[a])
            .expect("probs are never NaN")
            .then(a.cmp(&b))
    });
    let mut correct = 0.0;
    let mut area = 0.0;
    for (k, &i) in order.iter().enumerate() {
        correct += f64::from(series.labels()[i]);
        area += correct / (k + 1) as f64;
    }
    Ok(area / n as f64)
}

/// Uniform-width reliability bins; an empty series yields all-zero bins.
pub fn reliability_bins(series: &ProbSeries, n_bins: usize) -> Result<BinnedReliability> {
    if n_bins == 0 {
        return Err(Error::Argument("n_bins must be >= 1".to_string()));
    }
    let mut conf_sum = vec![0.0; n_bins];
    let mut acc_sum = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&p, &c) in series.probs().iter().zip(series.labels()) {
        let b = bin_index(p, n_bins);
        conf_sum[b] += p;
        acc_sum[b] += f64::from(c);
        counts[b] += 1;
    }
    let n = series.len();
    let bins = (0..n_bins)
        .map(|b| {
            let m = counts[b];
            ReliabilityBin {
                lower: b as f64 / n_bins as f64,
                upper: (b + 1) as f64 / n_bins as f64,
                count: m,
                fraction: if n == 0 { 0.0 } else { m as f64 / n as f64 },
                mean_confidence: if m == 0 { 0.0 } else { conf_sum[b] / m as f64 },
                mean_accuracy: if m == 0 { 0.0 } else { acc_sum[b] / m as f64 },
            }
        })
        .collect();
    Ok(BinnedReliability { bins })
}

impl ProbSeries {
    /// See [`ProbSeries::new`]; accepts any iterators for convenience.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, u8)>) -> Result<Self> {
        let (probs, labels): (Vec<f64>, Vec<u8>) = pairs.into_iter().unzip();
        ProbSeries::new(probs, labels)
    }
}
