use crate::data::{sq_dist, Dataset};
use crate::error::{invalid, Result};

use super::{check_k, plus_plus_seeds, ClusteringOutcome, Method, MethodConfig};

/// Fuzzy c-means by alternating membership and centroid updates.
///
/// Centroids start from k-means++ seeds; the best of `n_init` runs by final
/// objective is kept. A point lying exactly on a centroid gets crisp
/// membership there (split evenly if it lies on several).
pub fn fcm(data: &Dataset, k: usize, config: &MethodConfig) -> Result<ClusteringOutcome> {
    config.validate()?;
    check_k(data, k)?;
    let m = config.fuzzifier;
    if !(m > 1.0) {
        return Err(invalid(format!("fuzzifier must exceed 1, got {m}")));
    }
    let mut best: Option<Run> = None;
    for run in 0..config.n_init {
        let mut rng = config.rng.child(run as u64).rng();
        let seeds = plus_plus_seeds(data, k, &mut rng);
        let candidate = alternate(data, seeds, m, config.max_iter, config.tol);
        if best.as_ref().map_or(true, |b| candidate.objective < b.objective) {
            best = Some(candidate);
        }
    }
    let best = best.expect("n_init >= 1");
    let hard_labels = best.memberships.iter().map(|w| argmax(w)).collect();
    Ok(ClusteringOutcome {
        method: Method::Fcm,
        k,
        hard_labels,
        centroids: best.centroids,
        memberships: Some(best.memberships),
        mixture: None,
        heterogeneity: best.objective,
        objective_trace: best.trace,
    })
}

struct Run {
    centroids: Vec<Vec<f64>>,
    memberships: Vec<Vec<f64>>,
    objective: f64,
    trace: Vec<f64>,
}

fn alternate(data: &Dataset, mut centroids: Vec<Vec<f64>>, m: f64, max_iter: usize, tol: f64) -> Run {
    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..max_iter {
        let w = memberships(data, &centroids, m);
        let j = objective(data, &centroids, &w, m);
        let done = match trace.last() {
            Some(&prev) => (prev - j).abs() <= tol * prev,
            None => false,
        };
        trace.push(j);
        if done || j == 0.0 {
            break;
        }
        update_centroids(data, &w, m, &mut centroids);
    }
    let w = memberships(data, &centroids, m);
    let objective = objective(data, &centroids, &w, m);
    Run {
        centroids,
        memberships: w,
        objective,
        trace,
    }
}

/// `w_ij = 1 / Σ_l (d_ij / d_il)^{2/(m-1)}`, evaluated relative to the
/// nearest centroid so that neither overflow nor underflow can occur.
pub(crate) fn memberships(data: &Dataset, centroids: &[Vec<f64>], m: f64) -> Vec<Vec<f64>> {
    let exponent = 1.0 / (m - 1.0);
    data.rows()
        .map(|row| {
            let d2: Vec<f64> = centroids.iter().map(|c| sq_dist(row, c)).collect();
            let zeros = d2.iter().filter(|&&d| d == 0.0).count();
            if zeros > 0 {
                let share = 1.0 / zeros as f64;
                return d2.iter().map(|&d| if d == 0.0 { share } else { 0.0 }).collect();
            }
            let nearest = d2.iter().copied().fold(f64::INFINITY, f64::min);
            let u: Vec<f64> = d2.iter().map(|&d| (nearest / d).powf(exponent)).collect();
            let total: f64 = u.iter().sum();
            u.iter().map(|v| v / total).collect()
        })
        .collect()
}

fn objective(data: &Dataset, centroids: &[Vec<f64>], w: &[Vec<f64>], m: f64) -> f64 {
    data.rows()
        .zip(w)
        .map(|(row, wi)| {
            centroids
                .iter()
                .zip(wi)
                .map(|(c, &wij)| if wij > 0.0 { wij.powf(m) * sq_dist(row, c) } else { 0.0 })
                .sum::<f64>()
        })
        .sum()
}

fn update_centroids(data: &Dataset, w: &[Vec<f64>], m: f64, centroids: &mut [Vec<f64>]) {
    let dim = data.n_cols();
    for (j, centroid) in centroids.iter_mut().enumerate() {
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        for (row, wi) in data.rows().zip(w) {
            let weight = wi[j].powf(m);
            den += weight;
            for (acc, &v) in num.iter_mut().zip(row) {
                *acc += weight * v;
            }
        }
        // A centroid that lost every point keeps its position.
        if den > 0.0 {
            centroid.iter_mut().zip(&num).for_each(|(c, s)| *c = s / den);
        }
    }
}

fn argmax(w: &[f64]) -> usize {
    w.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::kmeans;
    use crate::data::RngSpec;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    fn cfg(seed: u64) -> MethodConfig {
        let mut c = MethodConfig::new(Method::Fcm);
        c.rng = RngSpec::new(seed);
        c
    }

    #[test]
    fn single_cluster_matches_kmeans() {
        let data = line(&[0.0, 1.0, 10.0, 11.0, 3.5]);
        let f = fcm(&data, 1, &cfg(1)).unwrap();
        assert!(f.memberships.as_ref().unwrap().iter().all(|w| w == &[1.0]));
        let mut kc = MethodConfig::new(Method::KMeans);
        kc.rng = RngSpec::new(1);
        let k = kmeans(&data, 1, &kc).unwrap();
        assert!((f.heterogeneity - k.heterogeneity).abs() <= 1e-10 * k.heterogeneity);
    }

    #[test]
    fn equidistant_point_splits_evenly() {
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let w = memberships(&data, &[vec![-1.0], vec![1.0]], 2.0);
        assert_eq!(w[0], vec![0.5, 0.5]);
        assert_eq!(w[1], vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_fuzzifier() {
        let data = line(&[0.0, 1.0, 2.0]);
        let mut c = cfg(0);
        c.fuzzifier = 0.9;
        assert!(fcm(&data, 2, &c).is_err());
    }

    /// Independent fixed point for {0,1,10,11}, k = 2, m = 2, written directly
    /// from the update equations and iterated to machine precision.
    fn fixed_point_two_pairs() -> f64 {
        let x = [0.0f64, 1.0, 10.0, 11.0];
        let (mut a, mut b) = (0.0f64, 11.0f64);
        for _ in 0..10_000 {
            let w: Vec<(f64, f64)> = x
                .iter()
                .map(|&xi| {
                    let (da, db) = ((xi - a).powi(2), (xi - b).powi(2));
                    let wa = 1.0 / (1.0 + da / db);
                    (wa, 1.0 - wa)
                })
                .collect();
            let na: f64 = x.iter().zip(&w).map(|(xi, (wa, _))| wa * wa * xi).sum();
            let da: f64 = w.iter().map(|(wa, _)| wa * wa).sum();
            let nb: f64 = x.iter().zip(&w).map(|(xi, (_, wb))| wb * wb * xi).sum();
            let db: f64 = w.iter().map(|(_, wb)| wb * wb).sum();
            a = na / da;
            b = nb / db;
        }
        x.iter()
            .map(|&xi| {
                let (da, db) = ((xi - a).powi(2), (xi - b).powi(2));
                let wa = 1.0 / (1.0 + da / db);
                wa * wa * da + (1.0 - wa) * (1.0 - wa) * db
            })
            .sum()
    }

    #[test]
    fn two_pairs_match_independent_fixed_point() {
        let oracle = fixed_point_two_pairs();
        let data = line(&[0.0, 1.0, 10.0, 11.0]);
        let mut c = cfg(11);
        c.tol = 1e-14;
        c.max_iter = 10_000;
        let out = fcm(&data, 2, &c).unwrap();
        assert!(
            (out.heterogeneity - oracle).abs() < 1e-9 * oracle,
            "{} vs {oracle}",
            out.heterogeneity
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn objective_monotone_and_rows_sum_to_one(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 5..30),
            k in 1usize..5,
            seed in any::<u64>(),
            m in 1.2f64..4.0,
        ) {
            let data = Dataset::from_rows(&rows).unwrap();
            let mut c = cfg(seed);
            c.fuzzifier = m;
            let out = fcm(&data, k.min(rows.len()), &c).unwrap();
            for w in out.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", out.objective_trace);
            }
            prop_assert!(out.heterogeneity <= out.objective_trace.last().unwrap() * (1.0 + 1e-9));
            for w in out.memberships.as_ref().unwrap() {
                let s: f64 = w.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
