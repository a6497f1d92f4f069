//! Shared numeric primitives: stable sigmoid/softplus, clamped logit, hashing.

/// Clamp applied to probabilities before any logit or log. Corpora legitimately
/// contain exact 0.0 and 1.0 confidences.
pub const PROB_EPS: f64 = 1e-6;

/// Clamp applied to calibrator outputs so they stay strictly inside (0, 1)
/// even when the underlying sigmoid saturates in f64.
pub const OUTPUT_EPS: f64 = 1e-15;

/// Numerically stable sigmoid, exact at 0 and monotone everywhere.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        1.0 / (1.0 + e)
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable softplus: `ln(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Clamp a probability into `[PROB_EPS, 1 - PROB_EPS]`.
#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Log-odds of a clamped probability.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = clamp_prob(p);
    (p / (1.0 - p)).ln()
}

/// Natural log of a probability, clamped away from zero first.
#[inline]
pub fn safe_ln(p: f64) -> f64 {
    clamp_prob(p).ln()
}

/// Seeded FNV-1a over raw bytes. Deterministic across platforms and runs,
/// unlike `DefaultHasher`; used for feature hashing and seed derivation.
#[inline]
pub fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}
