//! Spectral analysis of Gram matrices built from beta-mixing processes.
//!
//! * [`process`]: samplers, autocovariances and mixing-rate models.
//! * [`matrix`]: the `B_n`, `A_n`, `G_n` ensembles and the block scheme.
//! * [`spectral`]: eigenvalues, empirical spectral distributions, Stieltjes
//!   transforms.
//! * [`lsd`]: the limiting law as a fixed point in the Stieltjes domain.
//! * [`experiments`]: reproducible numerical campaigns.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod io;
pub mod lsd;
pub mod matrix;
pub mod process;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use lsd::{
    mp_cdf, mp_reference, solve_fixed_point, spectral_density, FixedPoint, LsdCdf, LsdSolver, SolverOptions,
    SpectralDensityFn,
};
pub use matrix::{
    build_an, build_bn, build_bn_from_values, build_gn, BlockParams, BlockScheme, DataMatrix, EnsembleConfig,
};
pub use num_complex::Complex64;
pub use process::{
    autocovariance_closed_form, beta_decay, check_cond_beta, estimate_autocovariance, sample_trajectory,
    AutocovarianceSeq, BetaDecayModel, DecayClass, Observable, ProcessKind, ProcessSpec, Trajectory,
};
pub use spectral::{eig_sym, empirical_stieltjes, kolmogorov_distance, EnsembleKind, EsdFunction, GramSpectrum};
