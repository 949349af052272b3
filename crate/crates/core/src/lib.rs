//! Single-machine core for sufficient dimension reduction by inverse
//! regression: response slicing, SIR/SAVE/DR kernels, a symmetric
//! eigensolver, whitening, full-sample estimators, simulation designs and
//! subspace metrics.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common double-precision instantiations.

pub mod data;
pub mod error;
pub mod estimate;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod simgen;
pub mod slicing;

pub use data::{sample_covariance, Dataset};
pub use error::{Result, SdrError};
pub use estimate::{fit_global, fit_global_detailed, GlobalFit, KRule, Mode, SdrEstimate};
pub use kernel::{KernelMatrix, KernelScale, Method};
pub use linalg::{inverse_sqrt, top_k_eigen, whiten, EigenPair};
pub use metrics::{aggregate, r_squared, trace_correlation, MetricRecord};
pub use scalar::Scalar;
pub use slicing::{make_slice_grid, slice_statistics, SliceSpec, SliceStats};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type SliceSpec64 = SliceSpec<f64>;
pub type SliceStats64 = SliceStats<f64>;
pub type KernelMatrix64 = KernelMatrix<f64>;
pub type SdrEstimate64 = SdrEstimate<f64>;
pub type SdrEstimate32 = SdrEstimate<f32>;
pub type EigenPair64 = EigenPair<f64>;
