//! Numerical tolerances and the JSON experiment document.
//!
//! # Config document
//!
//! ```json
//! {
//!   "distribution": { "kind": "ball_mixture", "centers": [[0.5, 0.0]], "radius": 0.05 },
//!   "experiment": { "k": 3, "n_grid": [32, 64, 128], "replicates": 200, "seed": 1 },
//!   "optimizer": { "kind": "multistart", "restarts": 10 }
//! }
//! ```
//!
//! `distribution.kind` is one of
//!
//! | kind | parameters |
//! |------|------------|
//! | `ball_mixture` | `centers` (list of points, d = 1 or 2), `radius` |
//! | `quasi_gaussian_mixture` | `means` (planar points), `weights`, `sigma` |
//! | `tail_counterexample` | `eta`, `r` |
//! | `finite_atoms` | `atoms` (list of points), `probabilities` |
//!
//! `experiment.k` is required. `n_grid` defaults to `32, 64, ..., 4096`,
//! `replicates` to 200 and `seed` to 0. `optimizer` is either
//! `{"kind": "exact_1d"}` or `{"kind": "multistart", "restarts": R}`; when
//! omitted, exact dynamic programming is used for d = 1 and multistart
//! Lloyd with 10 restarts for d = 2.

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::quadrature::Tolerance;

/// Planar cell integrals (masses, first moments, distortions).
pub const PLANE_TOL: Tolerance = Tolerance::new(1e-12, 1e-11);

/// Integrals along Voronoi faces.
pub const SURFACE_TOL: Tolerance = Tolerance::new(1e-14, 1e-11);

/// Allowed deviation of the total mass of a distribution from 1.
pub const MASS_TOL: f64 = 1e-8;

/// A candidate optimal codebook is certified when the sup-norm of its
/// expected gradient is at most this.
pub const CERTIFY_GRADIENT_TOL: f64 = 1e-8;

/// Certified optima must share the optimal risk within this.
pub const CERTIFY_RISK_TOL: f64 = 1e-9;

/// Two optima closer than this (after relabelling) are the same.
pub const DEDUP_TOL: f64 = 1e-6;

/// Relative threshold (against the largest diagonal entry) below which an
/// eigenvalue does not count as positive.
pub const PD_REL_TOL: f64 = 1e-6;

/// Allowed asymmetry of a Hessian.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Restarts used by multistart Lloyd when the document does not say.
pub const DEFAULT_RESTARTS: usize = 10;

/// The whole experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub distribution: DistributionSpec,
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub k: usize,
    #[serde(default = "default_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSection {
    #[serde(rename = "exact_1d")]
    Exact1d,
    Multistart {
        restarts: usize,
    },
}

fn default_grid() -> Vec<usize> {
    (5..=12).map(|e| 1usize << e).collect()
}

fn default_replicates() -> usize {
    200
}

impl ConfigDocument {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Canonical serialisation, used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let doc = ConfigDocument::from_json(
            r#"{"distribution": {"kind": "tail_counterexample", "eta": 2, "r": 10},
                "experiment": {"k": 3}}"#,
        )
        .unwrap();
        assert_eq!(doc.experiment.n_grid.first(), Some(&32));
        assert_eq!(doc.experiment.n_grid.last(), Some(&4096));
        assert_eq!(doc.experiment.replicates, 200);
        assert!(doc.optimizer.is_none());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = r#"{"distribution": {"kind": "tail_counterexample", "eta": 2, "r": 10},
                      "experiment": {"k": 3, "bogus": 1}}"#;
        assert!(ConfigDocument::from_json(bad).is_err());
    }

    #[test]
    fn optimizer_tags() {
        let o: OptimizerSection =
            serde_json::from_str(r#"{"kind": "multistart", "restarts": 4}"#).unwrap();
        assert_eq!(o, OptimizerSection::Multistart { restarts: 4 });
        let o: OptimizerSection = serde_json::from_str(r#"{"kind": "exact_1d"}"#).unwrap();
        assert_eq!(o, OptimizerSection::Exact1d);
    }
}
