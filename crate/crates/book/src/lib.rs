//! Compiles and runs every Rust listing in the guide under `book/`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/heterogeneity.md")]
pub mod heterogeneity {}
#[doc = include_str!("../../../book/src/elbow.md")]
pub mod elbow {}
#[doc = include_str!("../../../book/src/references.md")]
pub mod references {}
#[doc = include_str!("../../../book/src/significance.md")]
pub mod significance {}
#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("../../../book/src/theory.md")]
pub mod theory {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
