//! Asymptotic expectations of the elbow statistic for structureless data.

use std::fmt::Write as _;

use crate::error::{invalid, Result};

/// Large-`N` expectation for hard partitions of uniform data: `(1 + 2/D) / k`.
pub fn predicted_delta_large_n(d: usize, k: usize) -> f64 {
    (1.0 + 2.0 / d as f64) / k as f64
}

/// Large-`D` expectation for fuzzy c-means with fuzzifier `m`:
/// `[k^{1−m} − (k−1)^{1−m}] / [(k+1)^{1−m} − k^{1−m}] − 1`.
pub fn predicted_delta_fcm(k: usize, m: f64) -> f64 {
    let e = 1.0 - m;
    let p = |x: f64| x.powf(e);
    let k = k as f64;
    (p(k) - p(k - 1.0)) / (p(k + 1.0) - p(k)) - 1.0
}

/// Large-`D` expectation for Gaussian mixtures: `−ln(1 − k^{−2}) / ln(1 + k^{−1})`.
pub fn predicted_delta_gmm(k: usize) -> f64 {
    let k = k as f64;
    -(-1.0 / (k * k)).ln_1p() / (1.0 / k).ln_1p()
}

/// CSV table of all three predictions for `k = 2..=k_max`.
pub fn prediction_table(k_max: usize, d: usize, m: f64) -> Result<String> {
    if k_max < 2 {
        return Err(invalid(format!("k_max must be at least 2, got {k_max}")));
    }
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if !(m > 1.0 && m.is_finite()) {
        return Err(invalid(format!("fuzzifier must exceed 1, got {m}")));
    }
    let mut out = String::from("k,D,m,large_n,fcm,gmm\n");
    for k in 2..=k_max {
        let _ = writeln!(
            out,
            "{k},{d},{m:?},{:?},{:?},{:?}",
            predicted_delta_large_n(d, k),
            predicted_delta_fcm(k, m),
            predicted_delta_gmm(k)
        );
    }
    Ok(out)
}
