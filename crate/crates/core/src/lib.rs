//! Gaussian-kernel SVM training for large datasets: the kernel matrix is
//! compressed once per bandwidth into hierarchically semi-separable form,
//! the shifted operator is factorized once, and a closed-form ADMM loop
//! trains one model per box bound at the cost of one structured solve per
//! iteration. Dense reference implementations live in [`oracle`] and are
//! used only by tests and desk-scale validation.
//!
//! The numerical core is generic over the floating-point type through
//! [`Scalar`] (`f32` or `f64`); the type aliases at the crate root pin the
//! common `f64` instantiations.

pub mod admm;
pub mod cluster;
pub mod dataset;
pub mod error;
pub mod hss;
pub mod instrument;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default `f64` instantiations of the core types.
pub type DatasetF64 = dataset::Dataset<f64>;
pub type SparseVectorF64 = dataset::SparseVector<f64>;
pub type KernelSpecF64 = kernel::KernelSpec<f64>;
pub type HssMatrixF64 = hss::HssMatrix<f64>;
pub type SvmModelF64 = svm::SvmModel<f64>;
pub type AdmmConfigF64 = admm::AdmmConfig<f64>;
pub type MatF64 = linalg::Mat<f64>;
