//! Tools for studying the excess distortion of empirically optimal k-point
//! quantizers.
//!
//! The crate covers the whole chain from a source distribution to a measured
//! convergence rate:
//!
//! * [`geometry`]: codebooks, nearest-cluster assignment, Voronoi faces and
//!   integration over them (d = 1 and d = 2).
//! * [`distributions`]: ball mixtures, truncated ("quasi") Gaussian mixtures,
//!   a heavy-tailed one-dimensional counter-example and atomic laws.
//! * [`risk`]: contrast, empirical and population distortion, excess loss,
//!   the optimal set and the per-point gradient.
//! * [`erm`]: exact 1D k-means, Lloyd, multistart Lloyd, a grid oracle and
//!   population-level optimal codebooks.
//! * [`hessian`]: the boundary-integral Hessian of the distortion, a
//!   finite-difference oracle and a Jacobi eigen-solver.
//! * [`conditions`]: checkers for the sufficient conditions that guarantee
//!   a positive definite Hessian, and margin-constant estimates.
//! * [`ratelab`]: seeded Monte Carlo estimates of the expected loss as a
//!   function of the sample size, and log-log slope fits.
//!
//! ```
//! use quantlab::prelude::*;
//!
//! // Uniform law on [0, 1], written as a one-ball mixture.
//! let uniform = SourceDistribution::uniform_unit_interval();
//! let c = ClusterVector::from_1d(&[0.25, 0.75]);
//! let r = true_risk(&c, &uniform).unwrap();
//! assert!((r - 1.0 / 48.0).abs() < 1e-15);
//! ```

pub mod conditions;
pub mod config;
pub mod distributions;
pub mod erm;
mod error;
pub mod geometry;
pub mod hessian;
pub mod quadrature;
pub mod ratelab;
pub mod risk;
pub mod seed;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::conditions::{
        check_ball_separation, check_ball_separation_for, check_boundary_density,
        check_mixture_polarization, estimate_margin_constants, verify_means_proximity,
        ConditionReport,
    };
    pub use crate::distributions::{DistributionSpec, SourceDistribution};
    pub use crate::erm::{
        brute_force_erm, kmeans_1d_exact, lloyd, multistart_erm, optimal_clusters, LloydOptions,
    };
    pub use crate::geometry::{assign, boundary_faces, cell_mass, ClusterVector, Sample};
    pub use crate::hessian::{
        analytic_hessian, finite_difference_hessian, is_positive_definite, HessianMatrix,
        OffDiagonalSign,
    };
    pub use crate::ratelab::{
        counterexample_trajectory, fit_loglog_slope, run_rate_experiment, ExperimentConfig,
        Optimizer, RateFit, RateTable,
    };
    pub use crate::risk::{
        contrast, empirical_risk, gradient, loss, nearest_optimal, true_risk, OptimalSet,
    };
    pub use crate::{Error, Result};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/risk.md")]
    mod risk {}
    #[doc = include_str!("../../../book/src/erm.md")]
    mod erm {}
    #[doc = include_str!("../../../book/src/hessian.md")]
    mod hessian {}
    #[doc = include_str!("../../../book/src/conditions.md")]
    mod conditions {}
    #[doc = include_str!("../../../book/src/rates.md")]
    mod rates {}
    #[doc = include_str!("../../../book/src/counterexample.md")]
    mod counterexample {}
}
