//! Monte-Carlo significance tests for elbows in heterogeneity curves.
//!
//! A clustering backend turns a dataset into a heterogeneity curve `H_k`,
//! whose normalised curvature `δ_k` is the elbow statistic. Comparing `δ_k`
//! with its distribution over structureless reference datasets gives
//! empirical p-values, which are then judged per scale against a calibrated
//! threshold and jointly under false-discovery-rate control.
//!
//! ```
//! use elbowsig::{analyze, AnalysisConfig, Dataset, Method, ReferenceType};
//!
//! let rows: Vec<Vec<f64>> = (0..40)
//!     .map(|i| vec![if i < 20 { 0.0 } else { 10.0 } + (i % 7) as f64 * 0.05])
//!     .collect();
//! let data = Dataset::from_rows(&rows)?;
//!
//! let mut config = AnalysisConfig::new(Method::KMeans, ReferenceType::BoundingBoxUniform);
//! config.k_max = 5;
//! config.n_ref = 50;
//! config.seed = 1;
//! let report = analyze(&data, &config)?;
//! assert!(report.per_k_significant.contains(&2));
//! # Ok::<(), elbowsig::Error>(())
//! ```

pub mod baselines;
pub mod clustering;
pub mod data;
pub mod elbow;
pub mod error;
pub mod inference;
pub mod reference;
pub mod simstudy;
pub mod theory;

pub use baselines::{gap_statistic, GapResult, IndexCurve, ValidityIndex};
pub use clustering::{
    fit, fit_path, heterogeneity_sequence, ClusteringOutcome, HeterogeneitySequence, Method, MethodConfig,
};
pub use data::{Dataset, RngSpec};
pub use elbow::{elbow_from_values, elbow_sequence, ElbowSequence};
pub use error::{Error, ErrorKind, Result};
pub use inference::{analyze, AnalysisConfig, SignificanceReport};
pub use reference::{build_ensemble, ReferenceEnsemble, ReferenceType};
