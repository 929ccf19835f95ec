//! Synthetic data and the replicate experiments built on them.
//!
//! [`run_table_experiment`] repeats the whole procedure on freshly generated
//! datasets and tallies, for each selector, which `k` it reported.
//! [`run_scaling_experiment`] measures how the null elbow statistic
//! concentrates as the dimension grows.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{gap_from_inertia, hard_inertia, index_curve, ValidityIndex};
use crate::clustering::{fit_path, sequence_from_path, Method, MethodConfig};
use crate::data::{Dataset, RngSpec};
use crate::elbow::elbow_from_values;
use crate::error::{invalid, Error, Result};
use crate::inference::{assemble_report, AnalysisConfig, SeedBlock};
use crate::reference::{build_ensemble, ReferenceType};

/// Isotropic Gaussian mixture with centres uniform in a hypercube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n: usize,
    pub d: usize,
    pub components: usize,
    pub sigma_c: f64,
    pub box_halfwidth: f64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.d == 0 {
            return Err(invalid("blob spec needs at least one component and one dimension"));
        }
        if self.n < self.components.max(2) {
            return Err(invalid(format!(
                "blob spec needs n >= max(components, 2), got n = {} with {} components",
                self.n, self.components
            )));
        }
        if !(self.sigma_c > 0.0 && self.sigma_c.is_finite()) {
            return Err(invalid(format!("sigma_c must be positive, got {}", self.sigma_c)));
        }
        if !(self.box_halfwidth >= 0.0 && self.box_halfwidth.is_finite()) {
            return Err(invalid(format!(
                "box_halfwidth must be nonnegative, got {}",
                self.box_halfwidth
            )));
        }
        Ok(())
    }
}

/// A dataset with its generating labels kept apart, so the labels can
/// never reach the analysis by accident.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub data: Dataset,
    pub labels: Vec<usize>,
    pub centres: Vec<Vec<f64>>,
}

/// Centres first, then each point picks a component uniformly and adds
/// `N(0, σ_c² I)` noise.
pub fn gen_blobs(spec: &BlobSpec, rng: &RngSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = rng.rng();
    let h = spec.box_halfwidth;
    let centres: Vec<Vec<f64>> = (0..spec.components)
        .map(|_| (0..spec.d).map(|_| rng.random_range(-h..=h)).collect())
        .collect();
    let mut labels = Vec::with_capacity(spec.n);
    let mut values = Vec::with_capacity(spec.n * spec.d);
    for _ in 0..spec.n {
        let c = rng.random_range(0..spec.components);
        labels.push(c);
        for &mu in &centres[c] {
            let z: f64 = rng.sample(StandardNormal);
            values.push(mu + spec.sigma_c * z);
        }
    }
    Ok(LabeledDataset {
        data: Dataset::new(values, spec.n, spec.d)?,
        labels,
        centres,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnstructuredKind {
    /// Uniform on `[0, 1]^D`.
    UniformBox01,
    /// `N(0, σ² I)`.
    GaussianIso,
}

pub fn gen_unstructured(n: usize, d: usize, kind: UnstructuredKind, sigma: f64, rng: &RngSpec) -> Result<Dataset> {
    if n < 2 || d == 0 {
        return Err(invalid(format!("need n >= 2 and d >= 1, got n = {n}, d = {d}")));
    }
    if kind == UnstructuredKind::GaussianIso && !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    let mut rng = rng.rng();
    let values: Vec<f64> = (0..n * d)
        .map(|_| match kind {
            UnstructuredKind::UniformBox01 => rng.random::<f64>(),
            UnstructuredKind::GaussianIso => sigma * rng.sample::<f64, _>(StandardNormal),
        })
        .collect();
    Dataset::new(values, n, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Blobs,
    Uniform,
    Gaussian,
}

fn default_box() -> f64 {
    10.0
}
fn default_methods() -> Vec<Method> {
    vec![Method::Agglomerative]
}
fn default_references() -> Vec<ReferenceType> {
    vec![ReferenceType::PcaAlignedUniform]
}
fn default_k_max() -> usize {
    10
}
fn default_n_ref() -> usize {
    200
}
fn default_q() -> f64 {
    0.05
}
fn default_s_sig() -> usize {
    50
}
fn default_f_sel() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_fuzzifier() -> f64 {
    2.0
}
fn default_sigma() -> f64 {
    1.0
}
fn default_one() -> usize {
    1
}

/// A replicate study, read from a flat TOML table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDesign {
    #[serde(default)]
    pub name: String,
    pub replicates: usize,
    pub generator: Generator,
    pub n: usize,
    pub d: usize,
    /// Number of mixture components for `blobs`.
    #[serde(default = "default_one")]
    pub m: usize,
    /// Component spread for `blobs`, coordinate spread for `gaussian`.
    #[serde(default = "default_sigma")]
    pub sigma_c: f64,
    #[serde(default = "default_box")]
    pub box_halfwidth: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_references")]
    pub references: Vec<ReferenceType>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_n_ref")]
    pub n_ref: usize,
    #[serde(default = "default_q")]
    pub q1: f64,
    #[serde(default = "default_q")]
    pub q2: f64,
    #[serde(default = "default_s_sig")]
    pub s_sig: usize,
    #[serde(default = "default_f_sel")]
    pub f_sel: f64,
    #[serde(default)]
    pub seed: u64,
    /// Also run Gap, CH, DB and silhouette.
    #[serde(default = "default_true")]
    pub baselines: bool,
    #[serde(default = "default_fuzzifier")]
    pub fuzzifier: f64,
    /// Restarts for k-means, FCM and GMM.
    #[serde(default = "default_one")]
    pub n_init: usize,
}

impl ExperimentDesign {
    pub fn from_toml(text: &str) -> Result<Self> {
        let design: ExperimentDesign = toml::from_str(text).map_err(|e| invalid(format!("experiment config: {e}")))?;
        design.validate()?;
        Ok(design)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(invalid("replicates must be positive"));
        }
        if self.methods.is_empty() || self.references.is_empty() {
            return Err(invalid("methods and references must be non-empty"));
        }
        if self.k_max + 1 > self.n {
            return Err(invalid(format!(
                "k_max + 1 = {} exceeds n = {}",
                self.k_max + 1,
                self.n
            )));
        }
        for &method in &self.methods {
            self.analysis_config(method, self.references[0]).validate()?;
        }
        match self.generator {
            Generator::Blobs => self.blob_spec().validate(),
            Generator::Gaussian if !(self.sigma_c > 0.0) => Err(invalid("sigma_c must be positive")),
            _ if self.n < 2 || self.d == 0 => Err(invalid("need n >= 2 and d >= 1")),
            _ => Ok(()),
        }
    }

    pub fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            n: self.n,
            d: self.d,
            components: self.m,
            sigma_c: self.sigma_c,
            box_halfwidth: self.box_halfwidth,
        }
    }

    pub fn analysis_config(&self, method: Method, reference_type: ReferenceType) -> AnalysisConfig {
        let mut cfg = AnalysisConfig::new(method, reference_type);
        cfg.method.fuzzifier = self.fuzzifier;
        cfg.method.n_init = self.n_init;
        cfg.k_max = self.k_max;
        cfg.n_ref = self.n_ref;
        cfg.q1 = self.q1;
        cfg.q2 = self.q2;
        cfg.s_sig = self.s_sig;
        cfg.f_sel = self.f_sel;
        cfg.seed = self.seed;
        cfg
    }

    /// The observed dataset of replicate `r`.
    pub fn generate(&self, replicate: usize) -> Result<Dataset> {
        let rng = RngSpec::new(self.seed).child(replicate as u64).child(0);
        match self.generator {
            Generator::Blobs => Ok(gen_blobs(&self.blob_spec(), &rng)?.data),
            Generator::Uniform => gen_unstructured(self.n, self.d, UnstructuredKind::UniformBox01, 1.0, &rng),
            Generator::Gaussian => gen_unstructured(self.n, self.d, UnstructuredKind::GaussianIso, self.sigma_c, &rng),
        }
    }
}

/// Counts of the `k` reported by one selector, indexed from `k = 1`.
///
/// For the two ElbowSig rows, a replicate adds one count at every
/// significant `k`, and a replicate with nothing significant counts at
/// `k = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyRow {
    pub selector: String,
    pub method: Method,
    /// `None` for indices that do not use references.
    pub reference: Option<ReferenceType>,
    pub counts: Vec<usize>,
}

impl TallyRow {
    fn new(selector: &str, method: Method, reference: Option<ReferenceType>, k_max: usize) -> Self {
        TallyRow {
            selector: selector.to_string(),
            method,
            reference,
            counts: vec![0; k_max],
        }
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts.get(k.wrapping_sub(1)).copied().unwrap_or(0)
    }

    /// Replicates with at least one `k ≥ 2` (exact for one-count-per-replicate selectors,
    /// and for ElbowSig rows given the number of replicates).
    pub fn detections(&self, replicates: usize) -> usize {
        replicates - self.count(1)
    }
}

pub const PER_K: &str = "ElbowSig (per-k)";
pub const FDR: &str = "ElbowSig (FDR)";
pub const GAP_I: &str = "Gap (I)";
pub const GAP_II: &str = "Gap (II)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub design: ExperimentDesign,
    pub successful: usize,
    pub failures: Vec<ReplicateFailure>,
    pub tallies: Vec<TallyRow>,
}

impl ExperimentResult {
    pub fn row(&self, selector: &str, method: Method, reference: Option<ReferenceType>) -> Option<&TallyRow> {
        self.tallies
            .iter()
            .find(|t| t.selector == selector && t.method == method && t.reference == reference)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("experiment result is serializable");
        s.push('\n');
        s
    }

    /// Long format: `selector,method,reference,k,count`.
    pub fn to_tidy_csv(&self) -> String {
        let mut out = String::from("selector,method,reference,k,count\n");
        for t in &self.tallies {
            let reference = t.reference.map_or("", |r| r.name());
            for (i, c) in t.counts.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", t.selector, t.method, reference, i + 1, c);
            }
        }
        out
    }

    /// Wide table in the layout of the published count tables.
    pub fn counts_table(&self) -> String {
        let k_max = self.design.k_max;
        let mut out = String::new();
        let _ = write!(out, "{:<18} {:<14} {:<5}", "selector", "method", "ref");
        for k in 1..=k_max {
            let _ = write!(out, " {k:>4}");
        }
        out.push('\n');
        for t in &self.tallies {
            let elbow = t.selector == PER_K || t.selector == FDR;
            let gap = t.selector == GAP_I || t.selector == GAP_II;
            let _ = write!(
                out,
                "{:<18} {:<14} {:<5}",
                t.selector,
                t.method.name(),
                t.reference.map_or("-", |r| r.name())
            );
            for (i, c) in t.counts.iter().enumerate() {
                let cell = match (i, elbow, gap) {
                    (0, true, _) => format!("({c})"),
                    (0, false, false) => "--".to_string(),
                    _ => c.to_string(),
                };
                let _ = write!(out, " {cell:>4}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "replicates: {} ok, {} failed",
            self.successful,
            self.failures.len()
        );
        out
    }
}

/// What one replicate selected, per tally row, in tally order.
type ReplicateVotes = Vec<Vec<usize>>;

fn tally_layout(design: &ExperimentDesign) -> Vec<TallyRow> {
    let k_max = design.k_max;
    let mut rows = Vec::new();
    for &method in &design.methods {
        for &reference in &design.references {
            rows.push(TallyRow::new(PER_K, method, Some(reference), k_max));
            rows.push(TallyRow::new(FDR, method, Some(reference), k_max));
            if design.baselines {
                rows.push(TallyRow::new(GAP_I, method, Some(reference), k_max));
                rows.push(TallyRow::new(GAP_II, method, Some(reference), k_max));
            }
        }
        if design.baselines {
            for idx in ValidityIndex::ALL {
                rows.push(TallyRow::new(idx.name(), method, None, k_max));
            }
        }
    }
    rows
}

fn or_none(set: &[usize]) -> Vec<usize> {
    if set.is_empty() {
        vec![1]
    } else {
        set.to_vec()
    }
}

/// Runs every method and reference type on replicate `r`, producing
/// votes in the order of [`tally_layout`].
fn run_replicate(design: &ExperimentDesign, replicate: usize) -> Result<ReplicateVotes> {
    let data = design.generate(replicate)?;
    let rep = RngSpec::new(design.seed).child(replicate as u64);
    let mut votes = Vec::new();
    for (mi, &method) in design.methods.iter().enumerate() {
        let block = rep.child(1 + mi as u64);
        let base = design.analysis_config(method, design.references[0]);
        let path = fit_path(&data, &base.method.with_rng(block.child(0)), design.k_max)?;
        let h = sequence_from_path(method, &path);
        let observed_w = hard_inertia(&data, &path);
        for (ri, &reference) in design.references.iter().enumerate() {
            let config = design.analysis_config(method, reference);
            let seeds = SeedBlock {
                master: block,
                observed: block.child(0),
                references: block.child(1).child(ri as u64),
                calibration: block.child(2).child(ri as u64),
            };
            let ensemble = build_ensemble(
                &data,
                &config.method,
                design.k_max,
                design.n_ref,
                reference,
                seeds.references,
            )?;
            let report = assemble_report(&config, seeds, h.clone(), &ensemble)?;
            votes.push(or_none(&report.per_k_significant));
            votes.push(or_none(&report.fdr_significant));
            if design.baselines {
                let gap = gap_from_inertia(&observed_w, &ensemble.inertia, design.k_max)?;
                votes.push(vec![gap.k_hat_i]);
                votes.push(vec![gap.k_hat_ii]);
            }
        }
        if design.baselines {
            for idx in ValidityIndex::ALL {
                votes.push(vec![index_curve(&data, &path, idx, design.k_max)?.k_hat]);
            }
        }
    }
    Ok(votes)
}

/// Replicates run in parallel; failed replicates are excluded from the
/// tallies, and more than 1% failures is an error.
pub fn run_table_experiment(design: &ExperimentDesign) -> Result<ExperimentResult> {
    design.validate()?;
    let outcomes: Vec<Result<ReplicateVotes>> = (0..design.replicates)
        .into_par_iter()
        .map(|r| run_replicate(design, r))
        .collect();
    let mut tallies = tally_layout(design);
    let mut failures = Vec::new();
    let mut successful = 0;
    for (replicate, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(votes) => {
                successful += 1;
                for (row, ks) in tallies.iter_mut().zip(votes) {
                    for k in ks {
                        row.counts[k - 1] += 1;
                    }
                }
            }
            Err(e) => failures.push(ReplicateFailure {
                replicate,
                error: e.to_string(),
            }),
        }
    }
    if failures.len() * 100 > design.replicates {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: design.replicates,
            first: failures[0].error.clone(),
        });
    }
    Ok(ExperimentResult {
        design: design.clone(),
        successful,
        failures,
        tallies,
    })
}

/// Null concentration study on uniform `[0,1]^D` data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDesign {
    pub n: usize,
    pub k_probe: usize,
    pub methods: Vec<Method>,
    pub dims: Vec<usize>,
    pub n_ref: usize,
    pub fuzzifier: f64,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for ScalingDesign {
    fn default() -> Self {
        ScalingDesign {
            n: 30,
            k_probe: 3,
            methods: vec![Method::Agglomerative, Method::KMeans, Method::Fcm],
            dims: vec![8, 16, 32, 64, 128],
            n_ref: 200,
            fuzzifier: 2.0,
            n_init: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub method: Method,
    pub d: usize,
    pub mean: f64,
    /// Unbiased sample variance over the `n_ref` draws.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub design: ScalingDesign,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `ln variance` on `ln D`, per method.
    pub slopes: Vec<(Method, f64)>,
}

impl ScalingResult {
    pub fn slope(&self, method: Method) -> Option<f64> {
        self.slopes.iter().find(|(m, _)| *m == method).map(|&(_, s)| s)
    }

    pub fn row(&self, method: Method, d: usize) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.method == method && r.d == d)
    }

    pub fn to_tidy_csv(&self) -> String {
        let mut out = String::from("method,D,mean_delta,var_delta\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:?},{:?}", r.method, r.d, r.mean, r.variance);
        }
        out
    }
}

pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Draw `r` at dimension index `di` for method index `mi` uses
/// `seed.child(mi).child(di).child(r)`, split into data and fit substreams.
pub fn run_scaling_experiment(design: &ScalingDesign) -> Result<ScalingResult> {
    if design.dims.len() < 3 {
        return Err(invalid("scaling needs at least 3 dimensions"));
    }
    let (lo, hi) = design
        .dims
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if lo == 0 || hi < 10 * lo {
        return Err(invalid("dimension grid must be positive and span at least a decade"));
    }
    if design.k_probe < 2 || design.k_probe + 1 > design.n {
        return Err(invalid(format!("k_probe must lie in 2..n, got {}", design.k_probe)));
    }
    if design.n_ref < 2 {
        return Err(invalid("scaling needs at least 2 draws per dimension"));
    }
    let master = RngSpec::new(design.seed);
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for (mi, &method) in design.methods.iter().enumerate() {
        let mut config = MethodConfig::new(method);
        config.fuzzifier = design.fuzzifier;
        config.n_init = design.n_init;
        config.validate()?;
        for (di, &d) in design.dims.iter().enumerate() {
            let stream = master.child(mi as u64).child(di as u64);
            let deltas = (0..design.n_ref)
                .into_par_iter()
                .map(|r| {
                    let s = stream.child(r as u64);
                    let data = gen_unstructured(design.n, d, UnstructuredKind::UniformBox01, 1.0, &s.child(0))?;
                    let path = fit_path(&data, &config.with_rng(s.child(1)), design.k_probe)?;
                    let h: Vec<f64> = path.iter().map(|o| o.heterogeneity).collect();
                    Ok(elbow_from_values(&h)?.delta[design.k_probe - 2])
                })
                .collect::<Vec<Result<f64>>>()
                .into_iter()
                .enumerate()
                .map(|(index, r)| {
                    r.map_err(|e| Error::Reference {
                        index,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let n = deltas.len() as f64;
            let mean = deltas.iter().sum::<f64>() / n;
            let variance = deltas.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            rows.push(ScalingRow {
                method,
                d,
                mean,
                variance,
            });
        }
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.d as f64, r.variance))
            .unzip();
        let slope = if y.iter().all(|&v| v > 0.0) {
            loglog_slope(&x, &y)
        } else {
            f64::NAN
        };
        slopes.push((method, slope));
    }
    Ok(ScalingResult {
        design: design.clone(),
        rows,
        slopes,
    })
}
