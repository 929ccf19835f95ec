//! The elbow statistic: a normalised discrete curvature of `H_k`.
//!
//! With `ΔH_k = H_{k+1} − H_k` and `Δ²H_k = ΔH_k − ΔH_{k−1}`,
//!
//! ```text
//! δ_k = −Δ²H_k / ΔH_k = −(H_{k+1} − 2H_k + H_{k−1}) / (H_{k+1} − H_k)
//! ```
//!
//! defined for `k = 2..=k_max` given `H_1..=H_{k_max+1}`.

use serde::{Deserialize, Serialize};

use crate::clustering::HeterogeneitySequence;
use crate::error::{invalid, Result};

/// Relative size of the first-difference guard, scaled by `max(1, |H_1|)`.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowSequence {
    pub k_values: Vec<usize>,
    pub delta: Vec<f64>,
    /// Entries where `|ΔH_k|` fell below the guard and `δ_k` was set to 0.
    pub degenerate: Vec<bool>,
}

impl ElbowSequence {
    pub fn k_max(&self) -> usize {
        self.k_values.last().copied().unwrap_or(1)
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        k.checked_sub(2).and_then(|i| self.delta.get(i)).copied()
    }
}

pub fn elbow_sequence(h: &HeterogeneitySequence) -> Result<ElbowSequence> {
    elbow_from_values(&h.values)
}

/// `values[i]` holds `H_{i+1}`.
pub fn elbow_from_values(values: &[f64]) -> Result<ElbowSequence> {
    if values.len() < 3 {
        return Err(invalid(format!(
            "need H_1..H_(k_max+1) with k_max >= 2, got {} values",
            values.len()
        )));
    }
    let eps = DENOMINATOR_GUARD * values[0].abs().max(1.0);
    let mut out = ElbowSequence {
        k_values: Vec::with_capacity(values.len() - 2),
        delta: Vec::with_capacity(values.len() - 2),
        degenerate: Vec::with_capacity(values.len() - 2),
    };
    for (i, w) in values.windows(3).enumerate() {
        let (prev, cur, next) = (w[0], w[1], w[2]);
        let first = next - cur;
        let (d, flat) = if first.abs() < eps {
            (0.0, true)
        } else {
            (-((next - cur) - (cur - prev)) / first, false)
        };
        out.k_values.push(i + 2);
        out.delta.push(d);
        out.degenerate.push(flat);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_sequence_has_no_elbow() {
        let e = elbow_from_values(&[10.0, 8.0, 6.0, 4.0, 2.0]).unwrap();
        assert_eq!(e.delta, vec![0.0, 0.0, 0.0]);
        assert_eq!(e.k_values, vec![2, 3, 4]);
    }

    #[test]
    fn hand_evaluated_example() {
        let e = elbow_from_values(&[10.0, 4.0, 3.0, 2.5]).unwrap();
        assert_eq!(e.delta, vec![5.0, 1.0]);
    }

    #[test]
    fn geometric_closed_form() {
        for &r in &[0.2, 0.5, 0.7, 0.9] {
            let h: Vec<f64> = (1..=12).map(|k| 3.0 * f64::powi(r, k)).collect();
            let e = elbow_from_values(&h).unwrap();
            for d in e.delta {
                assert!((d - (1.0 - r) / r).abs() < 1e-12, "r={r}: {d}");
            }
        }
    }

    #[test]
    fn flat_segment_is_guarded() {
        let e = elbow_from_values(&[5.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(e.delta[1], 0.0);
        assert!(e.degenerate[1]);
        assert!(!e.degenerate[0]);
        assert!(e.delta.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(elbow_from_values(&[1.0, 0.5]).is_err());
    }

    #[test]
    fn stencil_uses_only_neighbours() {
        let base = [9.0, 5.0, 3.0, 2.0, 1.5, 1.2];
        let e0 = elbow_from_values(&base).unwrap();
        let mut bumped = base;
        bumped[5] = 1.1; // H_6 only enters δ_5
        let e1 = elbow_from_values(&bumped).unwrap();
        assert_eq!(e0.delta[..3], e1.delta[..3]);
        assert_ne!(e0.delta[3], e1.delta[3]);
    }

    proptest! {
        #[test]
        fn affine_rescaling_leaves_delta_unchanged(
            diffs in prop::collection::vec(0.1f64..10.0, 3..12),
            a in 0.1f64..100.0,
            b in -1000.0f64..1000.0,
        ) {
            let mut h = vec![200.0];
            for d in &diffs {
                h.push(h.last().unwrap() - d);
            }
            let scaled: Vec<f64> = h.iter().map(|v| a * v + b).collect();
            let e0 = elbow_from_values(&h).unwrap();
            let e1 = elbow_from_values(&scaled).unwrap();
            // Shifting by b costs digits in the differences; allow for that conditioning.
            for (x, y) in e0.delta.iter().zip(&e1.delta) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
            }
        }

        #[test]
        fn exact_affine_rescaling_is_bitwise_invariant(
            diffs in prop::collection::vec(1i64..1000, 3..12),
            shift in 0u32..20,
            b in -100_000i64..100_000,
        ) {
            // Integer H, power-of-two scale and integer shift keep every operation exact.
            let mut h = vec![50_000.0];
            for d in &diffs {
                h.push(h.last().unwrap() - *d as f64);
            }
            let a = f64::powi(2.0, shift as i32 - 10);
            let scaled: Vec<f64> = h.iter().map(|v| a * v + b as f64 * a).collect();
            let e0 = elbow_from_values(&h).unwrap();
            let e1 = elbow_from_values(&scaled).unwrap();
            for (x, y) in e0.delta.iter().zip(&e1.delta) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
            }
        }

        #[test]
        fn affine_sequence_is_identically_zero(
            start in -100.0f64..100.0, slope in -10.0f64..-0.01, len in 3usize..15,
        ) {
            // Integer-valued affine sequences difference exactly in floating point.
            let h: Vec<f64> = (0..len).map(|i| start.round() + slope.round().min(-1.0) * i as f64).collect();
            let e = elbow_from_values(&h).unwrap();
            prop_assert!(e.delta.iter().all(|&d| d == 0.0));
        }
    }
}
