//! Null reference datasets: structureless data with the observed support.
//!
//! Two generators are available. [`gen_bbox_uniform`] draws each feature
//! independently and uniformly over its observed range. [`gen_pca_uniform`]
//! draws uniformly in the box spanned by the data in its principal-component
//! coordinates and rotates the sample back, so the reference follows the
//! orientation of the data as well as its extent.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{fit_path, within_cluster_inertia, MethodConfig};
use crate::data::{Dataset, Rng, RngSpec};
use crate::elbow::elbow_from_values;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReferenceType {
    #[serde(rename = "bbox")]
    BoundingBoxUniform,
    #[serde(rename = "pca")]
    PcaAlignedUniform,
}

impl ReferenceType {
    pub fn name(self) -> &'static str {
        match self {
            ReferenceType::BoundingBoxUniform => "bbox",
            ReferenceType::PcaAlignedUniform => "pca",
        }
    }
}

impl fmt::Display for ReferenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReferenceType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bbox" | "bbu" | "box" => Ok(ReferenceType::BoundingBoxUniform),
            "pca" => Ok(ReferenceType::PcaAlignedUniform),
            _ => Err(invalid(format!("unknown reference type {s:?} (expected bbox or pca)"))),
        }
    }
}

/// Uniform draw on `[lo, hi]` that never leaves the interval.
#[inline]
fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    (lo + (hi - lo) * rng.random::<f64>()).clamp(lo, hi)
}

pub fn gen_bbox_uniform(data: &Dataset, rng: &RngSpec) -> Dataset {
    sample_bbox(&data.column_ranges(), data.n_rows(), &mut rng.rng())
}

fn sample_bbox(ranges: &[(f64, f64)], n: usize, rng: &mut Rng) -> Dataset {
    let mut values = Vec::with_capacity(n * ranges.len());
    for _ in 0..n {
        values.extend(ranges.iter().map(|&(lo, hi)| uniform_in(rng, lo, hi)));
    }
    Dataset::new(values, n, ranges.len()).expect("finite ranges give a valid dataset")
}

/// Principal axes of the centred data and the data's extent along each.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaFrame {
    pub mean: Vec<f64>,
    /// Orthonormal axes, one per row, `min(N, D)` of them.
    pub axes: Vec<Vec<f64>>,
    /// Observed `(min, max)` of the projections on each axis.
    pub ranges: Vec<(f64, f64)>,
}

impl PcaFrame {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let (n, d) = (data.n_rows(), data.n_cols());
        let mean = data.column_means();
        let centred = DMatrix::from_fn(n, d, |i, j| data.get(i, j) - mean[j]);
        if centred.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidData(
                "all observations are identical; principal axes are undefined".into(),
            ));
        }
        let svd = centred.clone().svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
        let axes: Vec<Vec<f64>> = v_t.row_iter().map(|r| r.iter().copied().collect()).collect();
        let mut frame = PcaFrame {
            mean,
            axes,
            ranges: Vec::new(),
        };
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); frame.axes.len()];
        for row in data.rows() {
            for (r, z) in ranges.iter_mut().zip(frame.project(row)) {
                r.0 = r.0.min(z);
                r.1 = r.1.max(z);
            }
        }
        frame.ranges = ranges;
        Ok(frame)
    }

    /// Coordinates of `x` along each principal axis.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| a.iter().zip(x).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }

    /// Inverse of [`PcaFrame::project`] on the span of the axes.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (a, &zi) in self.axes.iter().zip(z) {
            for (xi, ai) in x.iter_mut().zip(a) {
                *xi += zi * ai;
            }
        }
        x
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Dataset {
        let mut values = Vec::with_capacity(n * self.mean.len());
        let mut z = vec![0.0; self.axes.len()];
        for _ in 0..n {
            for (zi, &(lo, hi)) in z.iter_mut().zip(&self.ranges) {
                *zi = uniform_in(rng, lo, hi);
            }
            values.extend(self.reconstruct(&z));
        }
        Dataset::new(values, n, self.mean.len()).expect("finite frame gives a valid dataset")
    }
}

pub fn gen_pca_uniform(data: &Dataset, rng: &RngSpec) -> Result<Dataset> {
    Ok(PcaFrame::fit(data)?.sample(data.n_rows(), &mut rng.rng()))
}

/// Reusable generator: fits the bounding box or PCA frame once.
#[derive(Debug, Clone)]
pub enum ReferenceSampler {
    BoundingBox { ranges: Vec<(f64, f64)>, n: usize },
    Pca { frame: PcaFrame, n: usize },
}

impl ReferenceSampler {
    pub fn new(data: &Dataset, reference_type: ReferenceType) -> Result<Self> {
        Ok(match reference_type {
            ReferenceType::BoundingBoxUniform => ReferenceSampler::BoundingBox {
                ranges: data.column_ranges(),
                n: data.n_rows(),
            },
            ReferenceType::PcaAlignedUniform => ReferenceSampler::Pca {
                frame: PcaFrame::fit(data)?,
                n: data.n_rows(),
            },
        })
    }

    pub fn sample(&self, rng: &RngSpec) -> Dataset {
        let mut rng = rng.rng();
        match self {
            ReferenceSampler::BoundingBox { ranges, n } => sample_bbox(ranges, *n, &mut rng),
            ReferenceSampler::Pca { frame, n } => frame.sample(*n, &mut rng),
        }
    }
}

/// Elbow statistics of `N_R` references fitted exactly like the observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEnsemble {
    pub reference_type: ReferenceType,
    pub n_ref: usize,
    pub k_max: usize,
    /// `δ_k` for `k = 2..=k_max`, one row per reference.
    pub delta: Vec<Vec<f64>>,
    /// `H_k` for `k = 1..=k_max + 1`, one row per reference.
    pub heterogeneity: Vec<Vec<f64>>,
    /// Hard-label inertia `W_k` for `k = 1..=k_max + 1`, one row per reference.
    pub inertia: Vec<Vec<f64>>,
    /// Stream of reference `r`; sampling uses `child(0)`, fitting `child(1)`.
    pub seeds: Vec<RngSpec>,
}

impl ReferenceEnsemble {
    pub fn k_values(&self) -> Vec<usize> {
        (2..=self.k_max).collect()
    }

    /// Reference values of `δ_k`.
    pub fn delta_column(&self, k: usize) -> Vec<f64> {
        self.delta.iter().map(|row| row[k - 2]).collect()
    }
}

pub fn build_ensemble(
    data: &Dataset,
    config: &MethodConfig,
    k_max: usize,
    n_ref: usize,
    reference_type: ReferenceType,
    rng: RngSpec,
) -> Result<ReferenceEnsemble> {
    if n_ref < 2 {
        return Err(invalid(format!("need at least 2 reference datasets, got {n_ref}")));
    }
    if k_max < 2 {
        return Err(invalid(format!("k_max must be at least 2, got {k_max}")));
    }
    config.validate()?;
    let sampler = ReferenceSampler::new(data, reference_type)?;
    let seeds: Vec<RngSpec> = (0..n_ref as u64).map(|r| rng.child(r)).collect();
    let rows: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>)>> = seeds
        .par_iter()
        .map(|seed| {
            let reference = sampler.sample(&seed.child(0));
            let path = fit_path(&reference, &config.with_rng(seed.child(1)), k_max)?;
            let h: Vec<f64> = path.iter().map(|o| o.heterogeneity).collect();
            let w: Vec<f64> = if config.method.is_hard() {
                h.clone()
            } else {
                path.iter()
                    .map(|o| within_cluster_inertia(&reference, &o.hard_labels))
                    .collect()
            };
            let delta = elbow_from_values(&h)?.delta;
            Ok((delta, h, w))
        })
        .collect();

    let mut ensemble = ReferenceEnsemble {
        reference_type,
        n_ref,
        k_max,
        delta: Vec::with_capacity(n_ref),
        heterogeneity: Vec::with_capacity(n_ref),
        inertia: Vec::with_capacity(n_ref),
        seeds,
    };
    for (index, row) in rows.into_iter().enumerate() {
        let (d, h, w) = row.map_err(|e| Error::Reference {
            index,
            source: Box::new(e),
        })?;
        ensemble.delta.push(d);
        ensemble.heterogeneity.push(h);
        ensemble.inertia.push(w);
    }
    Ok(ensemble)
}
