//! Clustering backends and their heterogeneity functions.
//!
//! Each backend maps `(data, k)` to a [`ClusteringOutcome`] whose
//! `heterogeneity` is the sum of point-wise contributions:
//!
//! | backend | point-wise contribution |
//! |---|---|
//! | agglomerative (Ward), k-means | `min_j ‖x − μ_j‖²` |
//! | fuzzy c-means | `Σ_j w_j^m ‖x − μ_j‖²` |
//! | Gaussian mixture | `−ln Σ_j π_j φ(x │ μ_j, Σ_j)` |
//!
//! [`heterogeneity_sequence`] evaluates one backend at every `k` in
//! `1..=k_max + 1`.

mod fcm;
mod gmm;
mod kmeans;
mod ward;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, Dataset, RngSpec};
use crate::error::{invalid, Error, Result};

pub use fcm::fcm;
pub use gmm::{gmm_em, Mixture};
pub use kmeans::kmeans;
pub use ward::{cut_dendrogram, ward_dendrogram, Dendrogram, Merge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Agglomerative,
    KMeans,
    Fcm,
    Gmm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Agglomerative, Method::KMeans, Method::Fcm, Method::Gmm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Agglomerative => "agglomerative",
            Method::KMeans => "kmeans",
            Method::Fcm => "fcm",
            Method::Gmm => "gmm",
        }
    }

    /// Whether the heterogeneity is a hard-partition inertia.
    pub fn is_hard(self) -> bool {
        matches!(self, Method::Agglomerative | Method::KMeans)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "agglomerative" | "ward" => Ok(Method::Agglomerative),
            "kmeans" | "k-means" => Ok(Method::KMeans),
            "fcm" => Ok(Method::Fcm),
            "gmm" => Ok(Method::Gmm),
            _ => Err(invalid(format!(
                "unknown method {s:?} (expected agglomerative, kmeans, fcm or gmm)"
            ))),
        }
    }
}

/// Settings for one clustering backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    /// FCM fuzzifier `m > 1`.
    pub fuzzifier: f64,
    pub max_iter: usize,
    /// Stop once the relative change of the objective drops to this level.
    pub tol: f64,
    pub n_init: usize,
    /// Ridge added to every GMM covariance. `None` means
    /// `1e-6 × mean feature variance` of the data being fitted.
    pub covariance_reg: Option<f64>,
    pub rng: RngSpec,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        MethodConfig {
            method,
            fuzzifier: 2.0,
            max_iter: 300,
            tol: 1e-6,
            n_init: 1,
            covariance_reg: None,
            rng: RngSpec::new(0),
        }
    }

    pub fn with_rng(&self, rng: RngSpec) -> Self {
        MethodConfig { rng, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Method::Fcm && !(self.fuzzifier > 1.0 && self.fuzzifier.is_finite()) {
            return Err(invalid(format!("fuzzifier must exceed 1, got {}", self.fuzzifier)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be positive"));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(invalid(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if self.n_init == 0 {
            return Err(invalid("n_init must be positive"));
        }
        if let Some(reg) = self.covariance_reg {
            if !(reg > 0.0 && reg.is_finite()) {
                return Err(invalid(format!("covariance_reg must be positive, got {reg}")));
            }
        }
        Ok(())
    }
}

/// The fitted state of one `(method, k)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringOutcome {
    pub method: Method,
    pub k: usize,
    /// Cluster index per observation; argmax labels for FCM and GMM.
    pub hard_labels: Vec<usize>,
    /// `k × D` centroids (component means for GMM).
    pub centroids: Vec<Vec<f64>>,
    /// `N × k` fuzzy memberships (FCM only).
    pub memberships: Option<Vec<Vec<f64>>>,
    pub mixture: Option<Mixture>,
    pub heterogeneity: f64,
    /// Objective after each iteration of the winning run: inertia for
    /// k-means, `J_m` for FCM, log-likelihood for GMM. Empty for Ward.
    pub objective_trace: Vec<f64>,
}

/// `H_k` for `k = 1..=k_max + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneitySequence {
    pub method: Method,
    pub k_values: Vec<usize>,
    pub values: Vec<f64>,
}

impl HeterogeneitySequence {
    pub fn k_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }

    /// Every `k` where `H_{k+1} > H_k`. Only meaningful for methods whose
    /// heterogeneity should not increase; nothing is repaired.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.values
            .windows(2)
            .zip(&self.k_values)
            .filter(|(w, _)| w[1] > w[0])
            .map(|(_, &k)| k)
            .collect()
    }
}

/// Fits a single `k` with the configured backend.
pub fn fit(data: &Dataset, k: usize, config: &MethodConfig) -> Result<ClusteringOutcome> {
    match config.method {
        Method::Agglomerative => {
            config.validate()?;
            check_k(data, k)?;
            let dendrogram = ward_dendrogram(data);
            Ok(outcome_from_labels(
                data,
                Method::Agglomerative,
                cut_dendrogram(&dendrogram, k)?,
                k,
            ))
        }
        Method::KMeans => kmeans(data, k, config),
        Method::Fcm => fcm(data, k, config),
        Method::Gmm => gmm_em(data, k, config),
    }
}

/// Fits `k = 1..=k_max + 1`. Ward builds one dendrogram and cuts it; the
/// iterative backends refit each `k` on its own stream `config.rng.child(k)`.
pub fn fit_path(data: &Dataset, config: &MethodConfig, k_max: usize) -> Result<Vec<ClusteringOutcome>> {
    config.validate()?;
    if k_max == 0 {
        return Err(invalid("k_max must be positive"));
    }
    if k_max + 1 > data.n_rows() {
        return Err(invalid(format!(
            "k_max + 1 = {} exceeds the number of observations {}",
            k_max + 1,
            data.n_rows()
        )));
    }
    let ks = 1..=k_max + 1;
    match config.method {
        Method::Agglomerative => {
            let dendrogram = ward_dendrogram(data);
            ks.map(|k| {
                let labels = cut_dendrogram(&dendrogram, k).map_err(|e| e.at_k(k))?;
                Ok(outcome_from_labels(data, Method::Agglomerative, labels, k))
            })
            .collect()
        }
        _ => ks
            .map(|k| fit(data, k, &config.with_rng(config.rng.child(k as u64))).map_err(|e| e.at_k(k)))
            .collect(),
    }
}

pub fn heterogeneity_sequence(data: &Dataset, config: &MethodConfig, k_max: usize) -> Result<HeterogeneitySequence> {
    let path = fit_path(data, config, k_max)?;
    Ok(sequence_from_path(config.method, &path))
}

pub fn sequence_from_path(method: Method, path: &[ClusteringOutcome]) -> HeterogeneitySequence {
    HeterogeneitySequence {
        method,
        k_values: path.iter().map(|o| o.k).collect(),
        values: path.iter().map(|o| o.heterogeneity).collect(),
    }
}

pub(crate) fn check_k(data: &Dataset, k: usize) -> Result<()> {
    if k == 0 || k > data.n_rows() {
        return Err(Error::KOutOfRange { k, n: data.n_rows() });
    }
    Ok(())
}

/// Means of each labelled group. Labels must lie in `0..k`.
pub fn cluster_means(data: &Dataset, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; data.n_cols()]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in data.rows().zip(labels) {
        counts[l] += 1;
        for (s, &v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            let c = c as f64;
            s.iter_mut().for_each(|v| *v /= c);
        }
    }
    sums
}

/// Sum of squared distances from each point to the mean of its group.
pub fn within_cluster_inertia(data: &Dataset, labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let means = cluster_means(data, labels, k);
    data.rows().zip(labels).map(|(row, &l)| sq_dist(row, &means[l])).sum()
}

fn outcome_from_labels(data: &Dataset, method: Method, labels: Vec<usize>, k: usize) -> ClusteringOutcome {
    let centroids = cluster_means(data, &labels, k);
    let heterogeneity = data
        .rows()
        .zip(&labels)
        .map(|(row, &l)| sq_dist(row, &centroids[l]))
        .sum();
    ClusteringOutcome {
        method,
        k,
        hard_labels: labels,
        centroids,
        memberships: None,
        mixture: None,
        heterogeneity,
        objective_trace: Vec::new(),
    }
}

/// k-means++ seeding: first centre uniform, later ones with probability
/// proportional to squared distance from the nearest chosen centre.
pub(crate) fn plus_plus_seeds<R: rand::Rng>(data: &Dataset, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = data.n_rows();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centres = vec![data.row(first).to_vec()];
    let mut nearest: Vec<f64> = data.rows().map(|r| sq_dist(r, data.row(first))).collect();
    while centres.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` a hair below `target`.
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let centre = data.row(pick).to_vec();
        for (d, row) in nearest.iter_mut().zip(data.rows()) {
            *d = d.min(sq_dist(row, &centre));
        }
        centres.push(centre);
    }
    centres
}
