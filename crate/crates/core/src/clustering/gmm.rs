use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::{check_k, kmeans, ClusteringOutcome, Method, MethodConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Full-covariance Gaussian mixture parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub covariance_reg: f64,
}

struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len() as f64;
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numerical("covariance is not positive definite after regularization".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::Numerical("covariance determinant is not finite".into()));
        }
        Ok(Component {
            weight,
            mean,
            cov,
            chol,
            log_norm: -0.5 * (dim * LN_2PI + log_det),
        })
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * y.norm_squared()
    }
}

/// Expectation–maximization for a full-covariance mixture, initialised from
/// a k-means fit on the same stream. Every M-step adds `covariance_reg · I`
/// to each covariance. The heterogeneity is the total negative
/// log-likelihood at the final parameters and may be negative.
pub fn gmm_em(data: &Dataset, k: usize, config: &MethodConfig) -> Result<ClusteringOutcome> {
    config.validate()?;
    check_k(data, k)?;
    let reg = config.covariance_reg.unwrap_or_else(|| default_reg(data));
    let points: Vec<DVector<f64>> = data.rows().map(DVector::from_column_slice).collect();

    let init = kmeans(
        data,
        k,
        &MethodConfig {
            method: Method::KMeans,
            ..config.clone()
        },
    )?;
    let mut resp = vec![vec![0.0; k]; points.len()];
    for (r, &l) in resp.iter_mut().zip(&init.hard_labels) {
        r[l] = 1.0;
    }
    let mut components = m_step(&points, &resp, reg, None)?;

    let mut trace = Vec::new();
    let mut ll = f64::NAN;
    for iter in 0..config.max_iter {
        ll = e_step(&points, &components, &mut resp);
        if !ll.is_finite() {
            return Err(Error::Numerical("log-likelihood is not finite".into()));
        }
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() <= config.tol * prev.abs());
        trace.push(ll);
        if done || iter + 1 == config.max_iter {
            break;
        }
        components = m_step(&points, &resp, reg, Some(&components))?;
    }

    let hard_labels = resp
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
                )
                .0
        })
        .collect();
    let mixture = Mixture {
        weights: components.iter().map(|c| c.weight).collect(),
        means: components.iter().map(|c| c.mean.iter().copied().collect()).collect(),
        covariances: components
            .iter()
            .map(|c| c.cov.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect(),
        covariance_reg: reg,
    };
    Ok(ClusteringOutcome {
        method: Method::Gmm,
        k,
        hard_labels,
        centroids: mixture.means.clone(),
        memberships: None,
        mixture: Some(mixture),
        heterogeneity: -ll,
        objective_trace: trace,
    })
}

/// `1e-6 ×` the mean per-feature variance, floored at `1e-6` for constant data.
pub fn default_reg(data: &Dataset) -> f64 {
    let vars = data.column_variances();
    let mean = vars.iter().sum::<f64>() / vars.len() as f64;
    if mean > 0.0 {
        1e-6 * mean
    } else {
        1e-6
    }
}

/// Fills `resp` with posterior responsibilities and returns the log-likelihood.
fn e_step(points: &[DVector<f64>], components: &[Component], resp: &mut [Vec<f64>]) -> f64 {
    let log_weights: Vec<f64> = components.iter().map(|c| c.weight.ln()).collect();
    let mut total = 0.0;
    for (x, r) in points.iter().zip(resp.iter_mut()) {
        for ((rj, c), lw) in r.iter_mut().zip(components).zip(&log_weights) {
            *rj = lw + c.log_density(x);
        }
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = r.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        r.iter_mut().for_each(|v| *v = (*v - lse).exp());
        total += lse;
    }
    total
}

fn m_step(
    points: &[DVector<f64>],
    resp: &[Vec<f64>],
    reg: f64,
    previous: Option<&[Component]>,
) -> Result<Vec<Component>> {
    let n = points.len() as f64;
    let dim = points[0].len();
    let k = resp[0].len();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let nj: f64 = resp.iter().map(|r| r[j]).sum();
        let weight = nj / n;
        // A component with (numerically) no mass keeps its shape.
        if nj <= 1e-10 * n {
            if let Some(prev) = previous {
                out.push(Component::new(weight, prev[j].mean.clone(), prev[j].cov.clone())?);
                continue;
            }
        }
        let mut mean = DVector::zeros(dim);
        for (x, r) in points.iter().zip(resp) {
            mean.axpy(r[j], x, 1.0);
        }
        mean /= nj.max(f64::MIN_POSITIVE);
        let mut cov = DMatrix::zeros(dim, dim);
        for (x, r) in points.iter().zip(resp) {
            if r[j] > 0.0 {
                let d = x - &mean;
                cov.ger(r[j], &d, &d, 1.0);
            }
        }
        cov /= nj.max(f64::MIN_POSITIVE);
        cov = (&cov + cov.transpose()) * 0.5;
        for i in 0..dim {
            cov[(i, i)] += reg;
        }
        out.push(Component::new(weight, mean, cov)?);
    }
    Ok(out)
}
