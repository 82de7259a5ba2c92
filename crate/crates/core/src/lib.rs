//! Uncertainty-aware A-optimal sensor placement.
//!
//! The crate builds Bayesian approximation error (BAE) statistics from an
//! ensemble of accurate forward-model runs, folds them into a linear
//! surrogate posterior, and selects sensors greedily by the trace of the
//! posterior covariance. Because the corrected operator absorbs the
//! parameter/error cross-covariance, the resulting designs do not depend on
//! which linear surrogate was used — even the zero map works, which makes the
//! whole pipeline derivative-free.
//!
//! ```
//! use bae_oed::{build_kernel, greedy_design, DataLayout, DMatrix, DVector, GaussianDensity,
//!               KernelMode, TotalErrorModel};
//!
//! let noise = GaussianDensity::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.01])))?;
//! let model = TotalErrorModel::linear_gaussian(
//!     &GaussianDensity::standard(2),
//!     DMatrix::identity(2, 2),
//!     &noise,
//!     DataLayout::new(2, 1),
//! )?;
//! let kernel = build_kernel(&model, KernelMode::Joint, None)?;
//! assert_eq!(greedy_design(&kernel, 1)?.chosen, vec![1]);
//! # Ok::<(), bae_oed::Error>(())
//! ```

pub mod bae;
pub mod baem;
pub mod blackbox;
pub mod ensemble;
pub mod error;
pub mod gaussian;
pub mod oed;
pub mod pcn;
pub mod posterior;
pub mod problems;
pub mod spd;

pub use nalgebra::{DMatrix, DVector};

pub use bae::{
    corrected_operator, error_samples, estimate_stats, read_stats, write_stats, LinearSurrogate, StatsOptions,
    StatsSource, SurrogateKind, TotalErrorModel,
};
pub use baem::{read_baem, write_baem, BaemFile};
pub use blackbox::{run_black_box, BlackBoxSpec};
pub use ensemble::{
    load_ensemble, load_ensemble_with_layout, prior_predictive_noise, save_ensemble, synthesize_ensemble, DataLayout, Ensemble,
    EnsembleFormat, EnsembleMeta, DEFAULT_ENSEMBLE_SIZE,
};
pub use error::{Error, Result};
pub use gaussian::{marginal_block, BlockSplit, GaussianDensity};
pub use oed::{
    brute_force_design, evaluate_designs, greedy_design, greedy_design_with, quantiles, random_designs,
    DesignReport, DesignRow, GreedyOptions, GreedyTrace, Quantiles, DEFAULT_RANDOM_DESIGNS,
};
pub use pcn::{compare_designs_mcmc, pcn_sample, run_chain, ChainSummary, McmcTable, PcnConfig};
pub use posterior::{
    apply_design, apply_design_rows, bae_posterior, build_kernel, criterion, linear_gaussian_posterior,
    posterior_trace, DesignVector, KernelMode, ObjectiveKernel,
};
pub use problems::{
    build_priors, exp_problem, linear_problem, mini_darcy_problem, LevelSetMap, PriorParams, SensorGrid,
    TestProblem,
};
pub use spd::{woodbury_posterior_cov, SpdFactor};
