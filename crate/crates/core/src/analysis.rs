//! Aggregate analyses: per-cell win counting across (dataset, prompt, model,
//! metric) configurations, accuracy-vs-ECE series, and Pearson correlation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ConfigKey;
use crate::error::{Error, Result};

/// Whether a metric is better when smaller or when larger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

/// Metric-name to direction lookup. The default covers the four built-in
/// metrics: ece, ece_t and brier go down, auc goes up.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricDirections(BTreeMap<String, Direction>);

impl Default for MetricDirections {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert("ece".to_string(), Direction::LowerBetter);
        m.insert("ece_t".to_string(), Direction::LowerBetter);
        m.insert("brier".to_string(), Direction::LowerBetter);
        m.insert("auc".to_string(), Direction::HigherBetter);
        MetricDirections(m)
    }
}

impl MetricDirections {
    pub fn insert(&mut self, metric: &str, dir: Direction) {
        self.0.insert(metric.to_string(), dir);
    }

    pub fn get(&self, metric: &str) -> Result<Direction> {
        self.0
            .get(metric)
            .copied()
            .ok_or_else(|| Error::Config(format!("no direction configured for metric {metric:?}")))
    }
}

/// Method name -> win count over all evaluated (config, metric) cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinTable {
    pub wins: BTreeMap<String, u64>,
    pub total_cells: usize,
}

impl WinTable {
    /// CSV with header `method,wins`, methods in sorted order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,wins\n");
        for (method, wins) in &self.wins {
            out.push_str(&format!("{method},{wins}\n"));
        }
        out
    }
}

/// One evaluated cell: the method scores of a (config, metric) combination.
pub type ResultCells = BTreeMap<(ConfigKey, String), BTreeMap<String, f64>>;

/// Count wins per method, sharing the win among exactly tied methods.
pub fn count_wins(results: &ResultCells, dirs: &MetricDirections) -> Result<WinTable> {
    count_wins_eps(results, dirs, 0.0)
}

/// Win counting with a tie tolerance: every method within `eps` of the best
/// value in the cell's direction shares the win. `eps = 0` is exact.
pub fn count_wins_eps(results: &ResultCells, dirs: &MetricDirections, eps: f64) -> Result<WinTable> {
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::Argument(format!("tie epsilon = {eps} must be finite and >= 0")));
    }
    let mut wins: BTreeMap<String, u64> = BTreeMap::new();
    for methods in results.values() {
        for method in methods.keys() {
            wins.entry(method.clone()).or_insert(0);
        }
    }
    for ((_, metric), methods) in results {
        if methods.is_empty() {
            return Err(Error::Argument(format!("empty method map for metric {metric:?}")));
        }
        let dir = dirs.get(metric)?;
        let best = match dir {
            Direction::LowerBetter => methods.values().cloned().fold(f64::INFINITY, f64::min),
            Direction::HigherBetter => methods.values().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        for (method, &value) in methods {
            let is_win = match dir {
                Direction::LowerBetter => value <= best + eps,
                Direction::HigherBetter => value >= best - eps,
            };
            if is_win {
                *wins.get_mut(method).expect("method preregistered") += 1;
            }
        }
    }
    Ok(WinTable { wins, total_cells: results.len() })
}

/// Per-method (accuracy, ece) points, one series per method.
pub type AccuracyEceSeries = BTreeMap<String, Vec<(f64, f64)>>;

/// Build per-method (accuracy, ece) series sorted by accuracy.
///
/// Methods absent from a configuration simply skip that point. Equal
/// accuracies keep the configuration-key order; accuracies are expected in
/// [0, 1].
pub fn accuracy_ece_series(
    per_config: &BTreeMap<ConfigKey, (f64, BTreeMap<String, f64>)>,
) -> AccuracyEceSeries {
    let mut out: AccuracyEceSeries = BTreeMap::new();
    for (accuracy, methods) in per_config.values() {
        for (method, &ece) in methods {
            out.entry(method.clone()).or_default().push((*accuracy, ece));
        }
    }
    for series in out.values_mut() {
        series.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("accuracies are never NaN"));
    }
    out
}

/// CSV with header `method,accuracy,ece`, methods sorted, points by accuracy.
pub fn series_to_csv(series: &AccuracyEceSeries) -> String {
    let mut out = String::from("method,accuracy,ece\n");
    for (method, points) in series {
        for (accuracy, ece) in points {
            out.push_str(&format!("{method},{accuracy},{ece}\n"));
        }
    }
    out
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Argument(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Argument("pearson needs at least 2 points".to_string()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(cov / (vx * vy).sqrt())
}
