//! Classical selectors for the number of clusters.

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_means, fit_path, within_cluster_inertia, ClusteringOutcome, MethodConfig};
use crate::data::{sq_dist, Dataset, RngSpec};
use crate::error::{invalid, Error, Result};
use crate::reference::{build_ensemble, ReferenceType};

/// Gap curve with both selection rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub k_values: Vec<usize>,
    pub gap: Vec<f64>,
    pub s_k: Vec<f64>,
    /// Smallest `k` with `Gap(k) ≥ Gap(k+1) − s_{k+1}`.
    pub k_hat_i: usize,
    /// Maximizer of `Gap(k)`.
    pub k_hat_ii: usize,
    /// Set when no `k < k_max` satisfied rule I and `k_max` was returned.
    pub rule_i_fallback: bool,
}

pub fn gap_statistic(
    data: &Dataset,
    config: &MethodConfig,
    k_max: usize,
    n_ref: usize,
    reference_type: ReferenceType,
    rng: RngSpec,
) -> Result<GapResult> {
    let path = fit_path(data, &config.with_rng(rng.child(0)), k_max)?;
    let observed = hard_inertia(data, &path);
    let ensemble = build_ensemble(data, config, k_max, n_ref, reference_type, rng.child(1))?;
    gap_from_inertia(&observed, &ensemble.inertia, k_max)
}

/// `W_k` of the hard labels along a fitted path.
pub fn hard_inertia(data: &Dataset, path: &[ClusteringOutcome]) -> Vec<f64> {
    path.iter()
        .map(|o| {
            if o.method.is_hard() {
                o.heterogeneity
            } else {
                within_cluster_inertia(data, &o.hard_labels)
            }
        })
        .collect()
}

/// Gap curve for `k = 1..=k_max` from observed and reference inertias.
/// Both inputs are indexed from `k = 1` and may extend past `k_max`.
pub fn gap_from_inertia(observed: &[f64], references: &[Vec<f64>], k_max: usize) -> Result<GapResult> {
    if k_max < 1 || observed.len() < k_max || references.iter().any(|r| r.len() < k_max) {
        return Err(invalid("inertia sequences are shorter than k_max"));
    }
    if references.is_empty() {
        return Err(invalid("gap statistic needs at least one reference"));
    }
    let b = references.len() as f64;
    let log_checked = |w: f64, k: usize| {
        if w > 0.0 {
            Ok(w.ln())
        } else {
            Err(Error::ZeroDispersion { k })
        }
    };
    let mut gap = Vec::with_capacity(k_max);
    let mut s_k = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let logs = references
            .iter()
            .map(|r| log_checked(r[k - 1], k))
            .collect::<Result<Vec<f64>>>()?;
        let mean = logs.iter().sum::<f64>() / b;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / b;
        gap.push(mean - log_checked(observed[k - 1], k)?);
        s_k.push(var.sqrt() * (1.0 + 1.0 / b).sqrt());
    }
    let rule_i = (1..k_max).find(|&k| gap[k - 1] >= gap[k] - s_k[k]);
    let k_hat_ii = argbest(&gap, |a, b| a > b) + 1;
    Ok(GapResult {
        k_values: (1..=k_max).collect(),
        k_hat_i: rule_i.unwrap_or(k_max),
        rule_i_fallback: rule_i.is_none(),
        k_hat_ii,
        gap,
        s_k,
    })
}

/// First index whose value beats every other under `better`.
fn argbest(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

/// Relabels to `0..k` in order of first appearance and returns `k`.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn at_least_two(k: usize) -> Result<()> {
    if k < 2 {
        Err(invalid(format!("validity indices need at least 2 clusters, got {k}")))
    } else {
        Ok(())
    }
}

/// `[B/(k−1)] / [W/(N−k)]` with between-group scatter `B` and within-group scatter `W`.
pub fn calinski_harabasz(data: &Dataset, labels: &[usize]) -> Result<f64> {
    let (labels, k) = compact(labels);
    at_least_two(k)?;
    let n = data.n_rows();
    if k >= n {
        return Err(invalid(format!(
            "Calinski–Harabasz needs fewer clusters ({k}) than points ({n})"
        )));
    }
    let grand = data.column_means();
    let means = cluster_means(data, &labels, k);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let between: f64 = means
        .iter()
        .zip(&sizes)
        .map(|(m, &s)| s as f64 * sq_dist(m, &grand))
        .sum();
    let within = within_cluster_inertia(data, &labels);
    if within <= 0.0 {
        return Err(Error::Numerical(
            "Calinski–Harabasz is undefined when within-cluster scatter is zero".into(),
        ));
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

/// Mean over clusters of `max_{j≠i} (s_i + s_j) / d_ij`, where `s` is the mean
/// distance to the centroid and `d` the distance between centroids. `0/0` counts as 0.
pub fn davies_bouldin(data: &Dataset, labels: &[usize]) -> Result<f64> {
    let (labels, k) = compact(labels);
    at_least_two(k)?;
    let means = cluster_means(data, &labels, k);
    let mut spread = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (row, &l) in data.rows().zip(&labels) {
        spread[l] += sq_dist(row, &means[l]).sqrt();
        sizes[l] += 1;
    }
    spread.iter_mut().zip(&sizes).for_each(|(s, &n)| *s /= n as f64);
    let mut total = 0.0;
    for i in 0..k {
        let worst = (0..k)
            .filter(|&j| j != i)
            .map(|j| {
                let num = spread[i] + spread[j];
                let d = sq_dist(&means[i], &means[j]).sqrt();
                match (num == 0.0, d == 0.0) {
                    (true, _) => 0.0,
                    (false, true) => f64::INFINITY,
                    (false, false) => num / d,
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += worst;
    }
    Ok(total / k as f64)
}

/// Mean silhouette width. Points in singleton clusters score 0.
pub fn silhouette(data: &Dataset, labels: &[usize]) -> Result<f64> {
    let (labels, k) = compact(labels);
    at_least_two(k)?;
    let n = data.n_rows();
    if n < 3 {
        return Err(invalid("silhouette needs at least 3 points"));
    }
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let mut sums = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += sq_dist(data.row(i), data.row(j)).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidityIndex {
    #[serde(rename = "ch")]
    CalinskiHarabasz,
    #[serde(rename = "db")]
    DaviesBouldin,
    #[serde(rename = "silhouette")]
    Silhouette,
}

impl ValidityIndex {
    pub const ALL: [ValidityIndex; 3] = [
        ValidityIndex::CalinskiHarabasz,
        ValidityIndex::DaviesBouldin,
        ValidityIndex::Silhouette,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ValidityIndex::CalinskiHarabasz => "CH",
            ValidityIndex::DaviesBouldin => "DB",
            ValidityIndex::Silhouette => "Silhouette",
        }
    }

    pub fn score(self, data: &Dataset, labels: &[usize]) -> Result<f64> {
        match self {
            ValidityIndex::CalinskiHarabasz => calinski_harabasz(data, labels),
            ValidityIndex::DaviesBouldin => davies_bouldin(data, labels),
            ValidityIndex::Silhouette => silhouette(data, labels),
        }
    }

    fn lower_is_better(self) -> bool {
        self == ValidityIndex::DaviesBouldin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexCurve {
    pub index: ValidityIndex,
    pub k_values: Vec<usize>,
    /// `None` where the partition could not be scored, e.g. a soft backend
    /// whose hard labels collapsed to a single group.
    pub scores: Vec<Option<f64>>,
    pub k_hat: usize,
}

/// Scores the partitions `path[k−1]` for `k = 2..=k_max` and picks the best `k`.
pub fn index_curve(
    data: &Dataset,
    path: &[ClusteringOutcome],
    index: ValidityIndex,
    k_max: usize,
) -> Result<IndexCurve> {
    if k_max < 2 || path.len() < k_max {
        return Err(invalid(format!("index scan needs partitions for k = 2..={k_max}")));
    }
    let k_values: Vec<usize> = (2..=k_max).collect();
    let mut first_err = None;
    let scores: Vec<Option<f64>> = k_values
        .iter()
        .map(|&k| match index.score(data, &path[k - 1].hard_labels) {
            Ok(s) => Some(s),
            Err(e) => {
                first_err.get_or_insert(e.at_k(k));
                None
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (&k, s) in k_values.iter().zip(&scores) {
        if let Some(s) = *s {
            let better = match best {
                None => true,
                Some((_, b)) if index.lower_is_better() => s < b,
                Some((_, b)) => s > b,
            };
            if better {
                best = Some((k, s));
            }
        }
    }
    match best {
        Some((k_hat, _)) => Ok(IndexCurve {
            index,
            k_values,
            scores,
            k_hat,
        }),
        None => Err(first_err.expect("no score implies an error was recorded")),
    }
}
