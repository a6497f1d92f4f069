//! Post-hoc probability rescaling: Platt scaling fit by mean-squared error
//! and single-temperature scaling fit by negative log-likelihood.
//!
//! Both calibrators operate on probabilities. Temperature scaling lifts the
//! input to log-odds first, so beta = 1 is the identity; Platt scaling maps
//! `p -> sigmoid(a*p + b)` directly. Fits are bounded and derivative-light:
//! golden-section search for beta, a coarse grid plus damped gradient descent
//! for (a, b). Both are deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{logit, safe_ln, sigmoid, OUTPUT_EPS};
use crate::metrics::ProbSeries;

/// Box bound for each of the Platt parameters a and b.
pub const PLATT_BOUND: f64 = 50.0;
/// Grid resolution per axis for the coarse Platt search.
const PLATT_GRID: usize = 41;
/// Refinement steps after the grid search.
const PLATT_DESCENT_STEPS: usize = 200;

/// Temperature search interval.
pub const BETA_LO: f64 = 0.01;
pub const BETA_HI: f64 = 100.0;
/// Absolute tolerance of the golden-section search.
const GOLDEN_TOL: f64 = 1e-6;

/// Parameters of the Platt map `p -> sigmoid(a*p + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

/// Single temperature applied in log-odds space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureParam {
    pub beta: f64,
}

/// Serializable union of the two calibrator kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CalibratorParams {
    Platt(PlattParams),
    Temperature(TemperatureParam),
}

/// Apply the Platt map. Output is strictly inside (0, 1).
pub fn apply_platt(params: &PlattParams, p: f64) -> f64 {
    sigmoid(params.a * p + params.b).clamp(OUTPUT_EPS, 1.0 - OUTPUT_EPS)
}

/// Rescale a probability by temperature in log-odds space.
///
/// The input is clamped away from 0 and 1 before the logit, so beta = 1
/// reproduces the clamped input.
pub fn apply_temperature(param: &TemperatureParam, p: f64) -> f64 {
    sigmoid(logit(p) / param.beta).clamp(OUTPUT_EPS, 1.0 - OUTPUT_EPS)
}

/// Mean-squared error of a Platt map on a series. Public so oracle checks can
/// score candidate parameters without reaching into the fitter.
pub fn platt_mse(params: &PlattParams, series: &ProbSeries) -> f64 {
    let n = series.len();
    if n == 0 {
        return 0.0;
    }
    series
        .probs()
        .iter()
        .zip(series.labels())
        .map(|(&p, &c)| {
            let d = apply_platt(params, p) - f64::from(c);
            d * d
        })
        .sum::<f64>()
        / n as f64
}

/// Mean negative log-likelihood of a temperature-rescaled series.
pub fn temperature_nll(param: &TemperatureParam, series: &ProbSeries) -> f64 {
    let n = series.len();
    if n == 0 {
        return 0.0;
    }
    series
        .probs()
        .iter()
        .zip(series.labels())
        .map(|(&p, &c)| {
            let q = apply_temperature(param, p);
            if c == 1 {
                -safe_ln(q)
            } else {
                -safe_ln(1.0 - q)
            }
        })
        .sum::<f64>()
        / n as f64
}

fn platt_mse_gradient(params: &PlattParams, series: &ProbSeries) -> (f64, f64) {
    let n = series.len() as f64;
    let mut ga = 0.0;
    let mut gb = 0.0;
    for (&p, &c) in series.probs().iter().zip(series.labels()) {
        let s = sigmoid(params.a * p + params.b);
        let common = 2.0 * (s - f64::from(c)) * s * (1.0 - s) / n;
        ga += common * p;
        gb += common;
    }
    (ga, gb)
}

/// Fit Platt parameters minimizing MSE over the bounded box.
///
/// Coarse 41x41 grid over `[-PLATT_BOUND, PLATT_BOUND]^2`, then damped
/// gradient descent that only accepts improving steps, so the result is never
/// worse than the grid optimum.
pub fn fit_platt(val: &ProbSeries) -> Result<PlattParams> {
    if val.is_empty() {
        return Err(Error::Fit("cannot fit Platt parameters on an empty series".to_string()));
    }
    let step = 2.0 * PLATT_BOUND / (PLATT_GRID - 1) as f64;
    let mut best = PlattParams { a: 0.0, b: 0.0 };
    let mut best_mse = f64::INFINITY;
    for i in 0..PLATT_GRID {
        let a = -PLATT_BOUND + i as f64 * step;
        for j in 0..PLATT_GRID {
            let b = -PLATT_BOUND + j as f64 * step;
            let cand = PlattParams { a, b };
            let mse = platt_mse(&cand, val);
            if mse < best_mse {
                best_mse = mse;
                best = cand;
            }
        }
    }

    let mut lr = 1.0;
    for _ in 0..PLATT_DESCENT_STEPS {
        let (ga, gb) = platt_mse_gradient(&best, val);
        let cand = PlattParams {
            a: (best.a - lr * ga).clamp(-PLATT_BOUND, PLATT_BOUND),
            b: (best.b - lr * gb).clamp(-PLATT_BOUND, PLATT_BOUND),
        };
        let mse = platt_mse(&cand, val);
        if mse < best_mse {
            best = cand;
            best_mse = mse;
        } else {
            lr *= 0.5;
            if lr < 1e-12 {
                break;
            }
        }
    }
    Ok(best)
}

/// Golden-section minimization on [lo, hi] to absolute tolerance `tol`.
fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Fit the temperature minimizing NLL over `[BETA_LO, BETA_HI]`.
///
/// The search runs in log space (the curve is close to unimodal there), the
/// interval endpoints are checked explicitly, and flat objectives resolve to
/// the candidate closest to 1.
pub fn fit_temperature(val: &ProbSeries) -> Result<TemperatureParam> {
    if val.is_empty() {
        return Err(Error::Fit("cannot fit temperature on an empty series".to_string()));
    }
    let nll_of = |beta: f64| temperature_nll(&TemperatureParam { beta }, val);
    let t = golden_section_min(|t| nll_of(t.exp()), BETA_LO.ln(), BETA_HI.ln(), GOLDEN_TOL);
    let interior = t.exp();

    // Preference order on ties: 1 (least intervention), then the exact
    // endpoints, then the interior optimum. A later candidate must improve
    // strictly to win, so flat objectives resolve to 1 and boundary minima
    // snap to the bound instead of a point epsilon inside it.
    let candidates = [1.0, BETA_LO, BETA_HI, interior];
    let mut best = candidates[0];
    let mut best_nll = nll_of(best);
    for &beta in &candidates[1..] {
        let nll = nll_of(beta);
        if nll < best_nll - 1e-12 {
            best = beta;
            best_nll = nll;
        }
    }
    Ok(TemperatureParam { beta: best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(probs: &[f64], labels: &[u8]) -> ProbSeries {
        ProbSeries::new(probs.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn platt_zero_params_collapse_to_half() {
        let p = PlattParams { a: 0.0, b: 0.0 };
        for &x in &[0.0, 0.3, 1.0] {
            assert_eq!(apply_platt(&p, x), 0.5);
        }
    }

    #[test]
    fn platt_symmetric_point() {
        let p = PlattParams { a: 4.0, b: -2.0 };
        assert!((apply_platt(&p, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn platt_identity_slope_sigmoid_value() {
        let p = PlattParams { a: 1.0, b: 0.0 };
        assert!((apply_platt(&p, 0.8) - 0.6899744811276125).abs() < 1e-12);
    }

    #[test]
    fn platt_output_strictly_inside_unit_interval() {
        let p = PlattParams { a: PLATT_BOUND, b: PLATT_BOUND };
        let hi = apply_platt(&p, 1.0);
        assert!(hi < 1.0 && hi > 0.0);
        let q = PlattParams { a: -PLATT_BOUND, b: -PLATT_BOUND };
        let lo = apply_platt(&q, 1.0);
        assert!(lo > 0.0 && lo < 1.0);
    }

    #[test]
    fn temperature_identity_at_one() {
        let t = TemperatureParam { beta: 1.0 };
        for &p in &[0.1, 0.5, 0.93] {
            assert!((apply_temperature(&t, p) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn temperature_closed_form_flattening() {
        let t = TemperatureParam { beta: 2.0 };
        assert!((apply_temperature(&t, 0.9) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn temperature_large_beta_approaches_half() {
        let t = TemperatureParam { beta: BETA_HI };
        assert!((apply_temperature(&t, 0.99) - 0.5).abs() < 0.02);
    }

    #[test]
    fn temperature_output_strictly_inside_unit_interval() {
        let t = TemperatureParam { beta: BETA_LO };
        let hi = apply_temperature(&t, 1.0);
        assert!(hi < 1.0 && hi > 0.5);
        let lo = apply_temperature(&t, 0.0);
        assert!(lo > 0.0 && lo < 0.5);
    }

    #[test]
    fn fit_temperature_flat_nll_returns_one() {
        let s = series(&[0.5, 0.5, 0.5], &[1, 0, 1]);
        let t = fit_temperature(&s).unwrap();
        assert_eq!(t.beta, 1.0);
    }

    #[test]
    fn fit_temperature_single_correct_sharpens_to_lower_bound() {
        let s = series(&[0.9], &[1]);
        let t = fit_temperature(&s).unwrap();
        assert_eq!(t.beta, BETA_LO);
        // Oracle: NLL is monotone decreasing toward the lower bound.
        let grid: Vec<f64> = (0..50).map(|i| BETA_LO + i as f64 * 0.5).collect();
        let mut prev = f64::INFINITY;
        for &b in grid.iter().rev() {
            let nll = temperature_nll(&TemperatureParam { beta: b }, &s);
            assert!(nll <= prev + 1e-12);
            prev = nll;
        }
    }

    #[test]
    fn fit_temperature_separable_pair_sharpens() {
        let s = series(&[0.9, 0.1], &[1, 0]);
        let t = fit_temperature(&s).unwrap();
        assert_eq!(t.beta, BETA_LO);
    }

    #[test]
    fn fit_temperature_matches_grid_oracle() {
        // Mildly overconfident synthetic data: optimum is interior.
        let probs: Vec<f64> = (0..40).map(|i| 0.02 + 0.96 * i as f64 / 39.0).collect();
        let labels: Vec<u8> = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| u8::from(p > 0.35 && i % 7 != 0))
            .collect();
        let s = ProbSeries::new(probs, labels).unwrap();
        let fitted = fit_temperature(&s).unwrap();
        let fitted_nll = temperature_nll(&fitted, &s);
        let mut oracle_best = f64::INFINITY;
        for i in 0..1000 {
            let beta = BETA_LO * (BETA_HI / BETA_LO).powf(i as f64 / 999.0);
            oracle_best = oracle_best.min(temperature_nll(&TemperatureParam { beta }, &s));
        }
        assert!(fitted_nll <= oracle_best + 1e-3, "{fitted_nll} vs oracle {oracle_best}");
    }

    #[test]
    fn fit_platt_all_correct_pushes_high() {
        let s = series(&[0.2, 0.5, 0.9, 0.7], &[1, 1, 1, 1]);
        let fit = fit_platt(&s).unwrap();
        for &p in s.probs() {
            assert!(apply_platt(&fit, p) >= 0.5);
        }
        assert!(platt_mse(&fit, &s) < 0.25);
    }

    #[test]
    fn fit_platt_threshold_classifies_separable_series() {
        let probs = vec![0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9];
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let s = ProbSeries::new(probs.clone(), labels.clone()).unwrap();
        let fit = fit_platt(&s).unwrap();
        for (&p, &c) in probs.iter().zip(&labels) {
            let out = apply_platt(&fit, p);
            if c == 1 {
                assert!(out > 0.5, "p={p} mapped to {out}");
            } else {
                assert!(out < 0.5, "p={p} mapped to {out}");
            }
        }
    }

    #[test]
    fn platt_objective_constant_predictor_prefers_b_zero() {
        // With a frozen at 0 and balanced labels the best intercept is 0.
        let s = series(&[0.3, 0.9, 0.2, 0.6], &[1, 0, 0, 1]);
        let mut best_b = f64::NAN;
        let mut best = f64::INFINITY;
        for i in 0..20001 {
            let b = -1.0 + i as f64 * 1e-4;
            let mse = platt_mse(&PlattParams { a: 0.0, b }, &s);
            if mse < best {
                best = mse;
                best_b = b;
            }
        }
        assert!(best_b.abs() < 1e-3, "best b = {best_b}");
    }

    #[test]
    fn fit_platt_not_worse_than_grid_oracle() {
        let probs: Vec<f64> = (0..60).map(|i| (i as f64 * 0.016_6) % 1.0).collect();
        let labels: Vec<u8> = (0..60).map(|i| u8::from(i % 3 != 0)).collect();
        let s = ProbSeries::new(probs, labels).unwrap();
        let fit = fit_platt(&s).unwrap();
        let fitted_mse = platt_mse(&fit, &s);
        let mut oracle = f64::INFINITY;
        for i in 0..41 {
            for j in 0..41 {
                let a = -PLATT_BOUND + i as f64 * 2.5;
                let b = -PLATT_BOUND + j as f64 * 2.5;
                oracle = oracle.min(platt_mse(&PlattParams { a, b }, &s));
            }
        }
        assert!(fitted_mse <= oracle + 1e-6);
    }

    #[test]
    fn fits_reject_empty_series() {
        assert!(matches!(fit_platt(&ProbSeries::empty()).unwrap_err(), Error::Fit(_)));
        assert!(matches!(fit_temperature(&ProbSeries::empty()).unwrap_err(), Error::Fit(_)));
    }

    #[test]
    fn params_serialize_with_kind_tag() {
        let p = CalibratorParams::Platt(PlattParams { a: 1.5, b: -0.25 });
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"kind\":\"platt\""), "{json}");
        let t = CalibratorParams::Temperature(TemperatureParam { beta: 2.0 });
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"kind\":\"temperature\""), "{json}");
        let back: CalibratorParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let x = golden_section_min(|x| (x - 0.3).powi(2), -4.0, 5.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-6);
    }
}
