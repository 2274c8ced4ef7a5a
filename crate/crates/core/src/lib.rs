//! One-bit compressed sensing of wavelet-sparse images with a variational
//! Bayes recovery whose prior couples double-Lomax marginals through
//! directional Gaussian vine copulas.
//!
//! Module overview:
//!
//! - [`wavelet`]: separable orthonormal 2-D transforms and neighborhood windows.
//! - [`dlomax`]: the double-Lomax marginal, its sampler and estimators.
//! - [`copula`]: probit transform, copula and D-vine densities, correlation
//!   fitting and the precision correction.
//! - [`onebit`]: sensing matrices, sign measurements and quality metrics.
//! - [`vb`]: the variational recovery engine.
//! - [`baselines`]: binary iterative hard thresholding.
//! - [`experiment`]: sweep specifications, runs and summaries.

pub mod baselines;
pub mod copula;
pub mod dlomax;
pub mod error;
pub mod experiment;
pub mod image;
pub mod linalg;
pub mod onebit;
pub mod special;
pub mod vb;
pub mod wavelet;

pub use faer;

pub use baselines::{biht_recover, BihtConfig, BihtOutput};
pub use copula::{
    assemble_precision_correction, dvine_log_density, fit_sigma, gaussian_copula_density, v_transform,
    DirectionWeights, DirectionalCopula, SparseSymmetric, VineStructure,
};
pub use dlomax::{fit_eta, fit_shape, sample_hierarchical, DLParams, HierarchicalSample};
pub use error::{Error, Result};
pub use experiment::{run_sweep, summarize, synthesize_test_image, Algorithm, ExperimentSpec, ImageKind, ResultRow};
pub use image::Image;
pub use onebit::{generate_matrix, measure, reconstruction_snr, sign_consistency, MeasurementEnsemble};
pub use vb::{jj_lambda, recover, RecoveryConfig, TraceRow, VBState};
pub use wavelet::{analyze, extract_neighborhoods, synthesize, Direction, Filter, NeighborhoodSet, Orientation, WaveletPyramid};
