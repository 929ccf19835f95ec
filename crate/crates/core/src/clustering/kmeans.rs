use crate::data::{sq_dist, Dataset};
use crate::error::Result;

use super::{check_k, cluster_means, plus_plus_seeds, ClusteringOutcome, Method, MethodConfig};

/// Lloyd's algorithm from k-means++ seeds, best of `n_init` runs by inertia.
///
/// Run `r` draws from `config.rng.child(r)`. A cluster that empties during
/// assignment takes over the point farthest from its current centroid.
pub fn kmeans(data: &Dataset, k: usize, config: &MethodConfig) -> Result<ClusteringOutcome> {
    config.validate()?;
    check_k(data, k)?;
    let mut best: Option<Run> = None;
    for run in 0..config.n_init {
        let mut rng = config.rng.child(run as u64).rng();
        let seeds = plus_plus_seeds(data, k, &mut rng);
        let candidate = lloyd(data, seeds, config.max_iter, config.tol);
        if best.as_ref().map_or(true, |b| candidate.inertia < b.inertia) {
            best = Some(candidate);
        }
    }
    let best = best.expect("n_init >= 1");
    Ok(ClusteringOutcome {
        method: Method::KMeans,
        k,
        hard_labels: best.labels,
        centroids: best.centroids,
        memberships: None,
        mixture: None,
        heterogeneity: best.inertia,
        objective_trace: best.trace,
    })
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    trace: Vec<f64>,
}

fn lloyd(data: &Dataset, mut centroids: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> Run {
    let n = data.n_rows();
    let k = centroids.len();
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut trace: Vec<f64> = Vec::new();
    for iter in 0..max_iter {
        let changed = assign(data, &centroids, &mut labels, &mut dists);
        let repaired = repair_empty(data, &mut centroids, &mut labels, &mut dists, k);
        let inertia: f64 = dists.iter().sum();
        let converged = match trace.last() {
            Some(&prev) => (!changed && !repaired) || (prev - inertia).abs() <= tol * prev,
            None => false,
        };
        trace.push(inertia);
        if converged || inertia == 0.0 || iter + 1 == max_iter {
            break;
        }
        centroids = cluster_means(data, &labels, k);
    }
    Run {
        inertia: dists.iter().sum(),
        labels,
        centroids,
        trace,
    }
}

/// Nearest-centroid assignment (lowest index wins ties). Returns whether any label changed.
fn assign(data: &Dataset, centroids: &[Vec<f64>], labels: &mut [usize], dists: &mut [f64]) -> bool {
    let mut changed = false;
    for (i, row) in data.rows().enumerate() {
        let (mut best, mut best_d) = (0, f64::INFINITY);
        for (j, c) in centroids.iter().enumerate() {
            let d = sq_dist(row, c);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        changed |= labels[i] != best;
        labels[i] = best;
        dists[i] = best_d;
    }
    changed
}

/// Moves the centroid of each empty cluster onto the point farthest from its
/// own centroid, then reassigns. Returns whether any repair happened.
fn repair_empty(data: &Dataset, centroids: &mut [Vec<f64>], labels: &mut [usize], dists: &mut [f64], k: usize) -> bool {
    let mut repaired = false;
    for _ in 0..=k {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return repaired;
        };
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .expect("k <= n leaves some cluster with two points");
        centroids[empty] = data.row(donor).to_vec();
        repaired = true;
        assign(data, centroids, labels, dists);
        if labels.iter().all(|&l| l != empty) {
            // Duplicate points: another centroid at distance zero claimed the donor.
            labels[donor] = empty;
            dists[donor] = 0.0;
        }
    }
    repaired
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngSpec;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    fn cfg(n_init: usize, seed: u64) -> MethodConfig {
        let mut c = MethodConfig::new(Method::KMeans);
        c.n_init = n_init;
        c.tol = 0.0;
        c.rng = RngSpec::new(seed);
        c
    }

    /// Minimum inertia over every assignment of points to `k` non-empty groups.
    fn brute_force_min_inertia(data: &Dataset, k: usize) -> f64 {
        let n = data.n_rows();
        let mut labels = vec![0usize; n];
        let mut best = f64::INFINITY;
        loop {
            let mut seen = vec![false; k];
            labels.iter().for_each(|&l| seen[l] = true);
            if seen.iter().all(|&s| s) {
                let mut sums = vec![vec![0.0; data.n_cols()]; k];
                let mut counts = vec![0.0; k];
                for (row, &l) in data.rows().zip(&labels) {
                    counts[l] += 1.0;
                    for (s, v) in sums[l].iter_mut().zip(row) {
                        *s += v;
                    }
                }
                let h: f64 = data
                    .rows()
                    .zip(&labels)
                    .map(|(row, &l)| {
                        row.iter()
                            .zip(&sums[l])
                            .map(|(v, s)| (v - s / counts[l]).powi(2))
                            .sum::<f64>()
                    })
                    .sum();
                best = best.min(h);
            }
            // Odometer increment in base k.
            let mut i = 0;
            while i < n {
                labels[i] += 1;
                if labels[i] < k {
                    break;
                }
                labels[i] = 0;
                i += 1;
            }
            if i == n {
                return best;
            }
        }
    }

    #[test]
    fn single_cluster_is_grand_mean() {
        let data = Dataset::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]]).unwrap();
        let out = kmeans(&data, 1, &cfg(1, 1)).unwrap();
        assert_eq!(out.centroids, vec![vec![2.0, 4.0]]);
        let tss: f64 = data.rows().map(|r| sq_dist(r, &[2.0, 4.0])).sum();
        assert!((out.heterogeneity - tss).abs() < 1e-12);
    }

    #[test]
    fn k_equal_n_has_zero_inertia() {
        let data = line(&[0.3, -1.7, 2.9, 4.4, 10.0]);
        let out = kmeans(&data, 5, &cfg(1, 3)).unwrap();
        assert_eq!(out.heterogeneity, 0.0);
    }

    #[test]
    fn two_pairs_on_a_line() {
        let data = line(&[0.0, 1.0, 10.0, 11.0]);
        let out = kmeans(&data, 2, &cfg(5, 9)).unwrap();
        let mut c: Vec<f64> = out.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 10.5]);
        assert_eq!(out.heterogeneity, 1.0);
        assert_eq!(brute_force_min_inertia(&data, 2), 1.0);
    }

    #[test]
    fn rejects_k_out_of_range() {
        let data = line(&[0.0, 1.0]);
        assert!(kmeans(&data, 0, &cfg(1, 0)).is_err());
        assert!(kmeans(&data, 3, &cfg(1, 0)).is_err());
    }

    #[test]
    fn duplicate_points_keep_k_clusters() {
        let data = line(&[1.0, 1.0, 1.0, 5.0]);
        let out = kmeans(&data, 3, &cfg(1, 4)).unwrap();
        let mut seen = [false; 3];
        out.hard_labels.iter().for_each(|&l| seen[l] = true);
        assert!(seen.iter().all(|&s| s));
        assert_eq!(out.heterogeneity, 0.0);
    }

    #[test]
    fn matches_exhaustive_optimum_on_small_instances() {
        use rand::Rng;
        let mut rng = RngSpec::new(2024).rng();
        let (mut matched, mut total) = (0, 0);
        for trial in 0..60 {
            let n = rng.random_range(4..=8);
            let k = rng.random_range(2..=3);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let data = Dataset::from_rows(&rows).unwrap();
            let fitted = kmeans(&data, k, &cfg(50, trial)).unwrap().heterogeneity;
            let exact = brute_force_min_inertia(&data, k);
            total += 1;
            if (fitted - exact).abs() <= 1e-9 * exact.max(1e-300) {
                matched += 1;
            }
        }
        assert!(matched as f64 >= 0.95 * total as f64, "{matched}/{total}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn inertia_never_increases_within_a_run(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 6..40),
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            let data = Dataset::from_rows(&rows).unwrap();
            let out = kmeans(&data, k.min(rows.len()), &cfg(1, seed)).unwrap();
            for w in out.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", out.objective_trace);
            }
            let mut seen = vec![false; out.k];
            out.hard_labels.iter().for_each(|&l| seen[l] = true);
            prop_assert!(seen.iter().all(|&s| s));
        }
    }
}
