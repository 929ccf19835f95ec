//! From reference ensembles to significance decisions.
//!
//! The observed elbow statistic `δ_k` is ranked against the `N_R` reference
//! values to give an empirical p-value. Two decisions are then made:
//!
//! * **per-k**: `p_k < p_sig`, where `p_sig` is calibrated from the
//!   references themselves by leave-one-out subsampling so that the chance
//!   of a false detection at any scale is about `q1`;
//! * **FDR**: Benjamini–Hochberg at level `q2` over all tested scales.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{fit_path, sequence_from_path, HeterogeneitySequence, Method, MethodConfig};
use crate::data::{Dataset, RngSpec};
use crate::elbow::{elbow_sequence, ElbowSequence};
use crate::error::{invalid, Error, Result};
use crate::reference::{build_ensemble, ReferenceEnsemble, ReferenceType};

pub const REPORT_SCHEMA: &str = "elbowsig.report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueSequence {
    pub k_values: Vec<usize>,
    /// Number of references with `δ_k^(r) ≥ δ_k`.
    pub exceedances: Vec<usize>,
    pub n_ref: usize,
    pub p: Vec<f64>,
}

impl PValueSequence {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.k_values.iter().position(|&kk| kk == k).map(|i| self.p[i])
    }
}

/// `p_k = #{r : δ_k^(r) ≥ δ_k} / N_R`. Ties count as exceedances.
pub fn empirical_pvalues(delta: &ElbowSequence, ensemble: &ReferenceEnsemble) -> Result<PValueSequence> {
    let grid = ensemble.k_values();
    if delta.k_values != grid {
        return Err(Error::GridMismatch {
            observed: delta.k_values.clone(),
            reference: grid,
        });
    }
    let exceedances: Vec<usize> = delta
        .delta
        .iter()
        .enumerate()
        .map(|(j, &obs)| ensemble.delta.iter().filter(|row| row[j] >= obs).count())
        .collect();
    let n_ref = ensemble.n_ref;
    Ok(PValueSequence {
        k_values: grid,
        p: exceedances.iter().map(|&c| c as f64 / n_ref as f64).collect(),
        exceedances,
        n_ref,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub q1: f64,
    pub s_sig: usize,
    pub f_sel: f64,
    pub n_sel: usize,
    pub k_values: Vec<usize>,
    pub p_thr: Vec<f64>,
    pub p_sig: f64,
}

/// Index (0-based) of the lower empirical `q`-quantile among `n` sorted values:
/// the `⌈q·n⌉`-th order statistic, clamped to `1..=n`.
pub fn lower_quantile_index(q: f64, n: usize) -> usize {
    let rank = (q * n as f64 - 1e-9).ceil().max(1.0) as usize;
    rank.min(n) - 1
}

/// Leave-one-out null p-values for the selected references, in selection order.
fn loo_pvalues(sorted: &[f64], column: &[f64], selected: impl Iterator<Item = usize>) -> Vec<f64> {
    let n = sorted.len();
    selected
        .map(|i| {
            let v = column[i];
            let at_least = n - sorted.partition_point(|&x| x < v);
            (at_least - 1) as f64 / (n - 1) as f64
        })
        .collect()
}

/// Subsampling calibration of the per-scale thresholds.
///
/// For every scale and each of `s_sig` repetitions, `⌊f_sel·N_R⌋`
/// references are drawn without replacement, their leave-one-out p-values
/// are computed against the full ensemble, and the lower `q1`-quantile is
/// taken. `p_thr(k)` is the minimum over repetitions and `p_sig` the
/// minimum over scales, so larger `s_sig` gives smaller thresholds.
///
/// Repetition `s` at scale `k` draws from `rng.child(k).child(s)`.
pub fn calibrate_threshold(
    ensemble: &ReferenceEnsemble,
    q1: f64,
    s_sig: usize,
    f_sel: f64,
    rng: RngSpec,
) -> Result<ThresholdCalibration> {
    check_level("q1", q1)?;
    if !(f_sel > 0.0 && f_sel <= 1.0) {
        return Err(invalid(format!("f_sel must lie in (0, 1], got {f_sel}")));
    }
    if s_sig == 0 {
        return Err(invalid("s_sig must be positive"));
    }
    let n_ref = ensemble.n_ref;
    if n_ref < 10 {
        return Err(invalid(format!(
            "threshold calibration needs at least 10 references, got {n_ref}"
        )));
    }
    let n_sel = (f_sel * n_ref as f64 + 1e-9).floor() as usize;
    if n_sel == 0 {
        return Err(invalid(format!("f_sel = {f_sel} selects no references out of {n_ref}")));
    }
    let k_values = ensemble.k_values();
    let q_index = lower_quantile_index(q1, n_sel);
    let p_thr: Vec<f64> = k_values
        .par_iter()
        .map(|&k| {
            let column = ensemble.delta_column(k);
            let mut sorted = column.clone();
            sorted.sort_by(f64::total_cmp);
            let k_rng = rng.child(k as u64);
            (0..s_sig)
                .map(|s| {
                    let mut r = k_rng.child(s as u64).rng();
                    let chosen = sample(&mut r, n_ref, n_sel);
                    let mut p = loo_pvalues(&sorted, &column, chosen.into_iter());
                    p.sort_by(f64::total_cmp);
                    p[q_index]
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let p_sig = p_thr.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ThresholdCalibration {
        q1,
        s_sig,
        f_sel,
        n_sel,
        k_values,
        p_thr,
        p_sig,
    })
}

/// Benjamini–Hochberg step-up decisions, aligned with `p`.
pub fn bh_reject(p: &[f64], q2: f64) -> Vec<bool> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let cutoff = (1..=m)
        .rev()
        .find(|&i| p[order[i - 1]] <= q2 * i as f64 / m as f64)
        .map(|i| p[order[i - 1]]);
    match cutoff {
        Some(c) => p.iter().map(|&v| v <= c).collect(),
        None => vec![false; m],
    }
}

/// Scales rejected by Benjamini–Hochberg at level `q2`.
pub fn bh_fdr(p_values: &PValueSequence, q2: f64) -> Vec<usize> {
    p_values
        .k_values
        .iter()
        .zip(bh_reject(&p_values.p, q2))
        .filter_map(|(&k, r)| r.then_some(k))
        .collect()
}

fn check_level(name: &str, q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {q}")))
    }
}

/// Everything needed to run the procedure end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Backend settings. Its `rng` field is ignored; streams derive from `seed`.
    pub method: MethodConfig,
    pub reference_type: ReferenceType,
    pub k_max: usize,
    pub n_ref: usize,
    pub q1: f64,
    pub q2: f64,
    pub s_sig: usize,
    pub f_sel: f64,
    pub seed: u64,
    pub standardize: bool,
}

impl AnalysisConfig {
    pub fn new(method: Method, reference_type: ReferenceType) -> Self {
        AnalysisConfig {
            method: MethodConfig::new(method),
            reference_type,
            k_max: 10,
            n_ref: 200,
            q1: 0.05,
            q2: 0.05,
            s_sig: 50,
            f_sel: 0.5,
            seed: 0,
            standardize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if self.k_max < 2 {
            return Err(invalid(format!("k_max must be at least 2, got {}", self.k_max)));
        }
        if self.n_ref < 10 {
            return Err(invalid(format!("n_ref must be at least 10, got {}", self.n_ref)));
        }
        check_level("q1", self.q1)?;
        check_level("q2", self.q2)?;
        if self.s_sig == 0 {
            return Err(invalid("s_sig must be positive"));
        }
        if !(self.f_sel > 0.0 && self.f_sel <= 1.0) {
            return Err(invalid(format!("f_sel must lie in (0, 1], got {}", self.f_sel)));
        }
        if ((self.f_sel * self.n_ref as f64 + 1e-9).floor() as usize) == 0 {
            return Err(invalid("f_sel * n_ref must select at least one reference"));
        }
        Ok(())
    }

    pub fn streams(&self) -> SeedBlock {
        SeedBlock::from_master(RngSpec::new(self.seed))
    }
}

/// The random streams used by one analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedBlock {
    pub master: RngSpec,
    pub observed: RngSpec,
    pub references: RngSpec,
    pub calibration: RngSpec,
}

impl SeedBlock {
    pub fn from_master(master: RngSpec) -> Self {
        SeedBlock {
            master,
            observed: master.child(0),
            references: master.child(1),
            calibration: master.child(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub schema_version: String,
    pub method: MethodConfig,
    pub reference_type: ReferenceType,
    pub n_ref: usize,
    pub k_max: usize,
    pub standardized: bool,
    pub seeds: SeedBlock,
    pub heterogeneity: HeterogeneitySequence,
    pub delta_data: ElbowSequence,
    pub p_values: PValueSequence,
    pub calibration: ThresholdCalibration,
    pub q2: f64,
    pub per_k_significant: Vec<usize>,
    pub fdr_significant: Vec<usize>,
    /// Scales where `H_{k+1} > H_k`.
    pub monotonicity_violations: Vec<usize>,
}

/// Runs the full procedure on `data`.
pub fn analyze(data: &Dataset, config: &AnalysisConfig) -> Result<SignificanceReport> {
    config.validate()?;
    let data = if config.standardize {
        data.standardized()
    } else {
        data.clone()
    };
    let seeds = config.streams();
    let path = fit_path(&data, &config.method.with_rng(seeds.observed), config.k_max)?;
    let h = sequence_from_path(config.method.method, &path);
    let ensemble = build_ensemble(
        &data,
        &config.method,
        config.k_max,
        config.n_ref,
        config.reference_type,
        seeds.references,
    )?;
    assemble_report(config, seeds, h, &ensemble)
}

/// Steps three and four, given the observed heterogeneity and a prebuilt ensemble.
pub fn assemble_report(
    config: &AnalysisConfig,
    seeds: SeedBlock,
    heterogeneity: HeterogeneitySequence,
    ensemble: &ReferenceEnsemble,
) -> Result<SignificanceReport> {
    let delta_data = elbow_sequence(&heterogeneity)?;
    let p_values = empirical_pvalues(&delta_data, ensemble)?;
    let calibration = calibrate_threshold(ensemble, config.q1, config.s_sig, config.f_sel, seeds.calibration)?;
    let per_k_significant = p_values
        .k_values
        .iter()
        .zip(&p_values.p)
        .filter_map(|(&k, &p)| (p < calibration.p_sig).then_some(k))
        .collect();
    let fdr_significant = bh_fdr(&p_values, config.q2);
    Ok(SignificanceReport {
        schema_version: REPORT_SCHEMA.to_string(),
        method: config.method.with_rng(seeds.observed),
        reference_type: config.reference_type,
        n_ref: ensemble.n_ref,
        k_max: config.k_max,
        standardized: config.standardize,
        seeds,
        monotonicity_violations: heterogeneity.monotonicity_violations(),
        heterogeneity,
        delta_data,
        p_values,
        calibration,
        q2: config.q2,
        per_k_significant,
        fdr_significant,
    })
}

fn describe(set: &[usize]) -> String {
    if set.is_empty() {
        "k = 1 (no structure)".to_string()
    } else {
        let ks: Vec<String> = set.iter().map(|k| k.to_string()).collect();
        format!("k = {}", ks.join(", "))
    }
}

impl SignificanceReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report fields are serializable");
        s.push('\n');
        s
    }

    /// Per-k selection in words; an empty set reads `k = 1 (no structure)`.
    pub fn per_k_summary(&self) -> String {
        describe(&self.per_k_significant)
    }

    pub fn fdr_summary(&self) -> String {
        describe(&self.fdr_significant)
    }

    /// One row per `k = 1..=k_max + 1`; `delta` and `p` are empty outside `2..=k_max`.
    pub fn to_tidy_csv(&self) -> String {
        let mut out = String::from("k,H,delta,p,significant_per_k,significant_fdr\n");
        for (&k, h) in self.heterogeneity.k_values.iter().zip(&self.heterogeneity.values) {
            let (d, p) = match (self.delta_data.get(k), self.p_values.get(k)) {
                (Some(d), Some(p)) => (format!("{d:?}"), format!("{p:?}")),
                _ => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{k},{h:?},{d},{p},{},{}",
                self.per_k_significant.contains(&k),
                self.fdr_significant.contains(&k)
            );
        }
        out
    }

    /// Fixed-width table for terminals. `*` marks per-k significance and
    /// `+` marks FDR significance.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "method {}  reference {}  N_R {}  p_sig {:.4}  q2 {}",
            self.method.method, self.reference_type, self.n_ref, self.calibration.p_sig, self.q2
        );
        let _ = writeln!(
            out,
            "{:>4}  {:>14}  {:>10}  {:>7}  {:>5}  {:>3}",
            "k", "H_k", "delta_k", "p_k", "per-k", "FDR"
        );
        for (&k, h) in self.heterogeneity.k_values.iter().zip(&self.heterogeneity.values) {
            let (d, p) = match (self.delta_data.get(k), self.p_values.get(k)) {
                (Some(d), Some(p)) => (format!("{d:.4}"), format!("{p:.3}")),
                _ => ("-".to_string(), "-".to_string()),
            };
            let per_k = if self.per_k_significant.contains(&k) { "*" } else { "" };
            let fdr = if self.fdr_significant.contains(&k) { "+" } else { "" };
            let _ = writeln!(out, "{k:>4}  {h:>14.6}  {d:>10}  {p:>7}  {per_k:>5}  {fdr:>3}");
        }
        let _ = writeln!(out, "per-k (*): {}", self.per_k_summary());
        let _ = writeln!(out, "FDR   (+): {}", self.fdr_summary());
        if !self.monotonicity_violations.is_empty() {
            let _ = writeln!(out, "warning: H increases after k = {:?}", self.monotonicity_violations);
        }
        out
    }
}
