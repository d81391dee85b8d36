//! Checkers for sufficient conditions of a positive definite Hessian at
//! the optimal codebooks, and empirical margin constants.
//!
//! * [`check_boundary_density`]: the density on the union of the optimal
//!   Voronoi boundaries is below `Γ(d/2) B / (2^{d+5} π^{d/2}) inf_i P(V_i*)`,
//!   where `B` is the smallest distance between two optimal clusters.
//! * [`check_ball_separation`]: a mixture of `k` uniform balls of radius
//!   `rho` whose centers are at least `R` apart has its centers as unique
//!   optimal codebook when `R/2 > 3 rho` and `(R/2 - 3 rho)^2 >= 2 rho^2 d/(d+2)`.
//! * [`check_mixture_polarization`]: a truncated Gaussian mixture is
//!   polarized enough when `p_min / p_max` exceeds two explicit terms in
//!   `k`, `sigma`, the smallest mean separation `B~` and the truncation
//!   defect `epsilon`.
//! * [`verify_means_proximity`]: under the first of those terms, every
//!   mean has an optimal cluster within `B~/6` and
//!   `2 B~/3 <= B <= 4 B~/3`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{DistributionSpec, SourceDistribution};
use crate::geometry::{boundary_faces, dist_sq, BoundaryFace, ClusterVector, FaceGeometry};
use crate::risk::{best_alignment, nearest_optimal, true_risk, OptimalSet};
use crate::seed::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Points sampled along each face before refinement.
const FACE_SAMPLES: usize = 1000;
/// Golden-section iterations around the best sampled point.
const GOLDEN_ITERS: usize = 60;
/// Probes with a smaller excess loss are skipped by the margin estimator.
const MIN_PROBE_LOSS: f64 = 1e-9;

/// Which way a condition compares its two sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// Both sides of a sufficient condition and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub pass: bool,
    /// Intermediate quantities, by name.
    pub details: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ConditionReport {
    fn new(name: &str, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let pass = match relation {
            Relation::AtMost => lhs <= rhs,
            Relation::AtLeast => lhs >= rhs,
        };
        Self {
            name: name.into(),
            lhs,
            relation,
            rhs,
            pass,
            details: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }

    /// `name: PASS (lhs <= rhs)` style one-line summary.
    pub fn summary(&self) -> String {
        let rel = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        format!(
            "{}: {} ({:.6e} {rel} {:.6e})",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.lhs,
            self.rhs
        )
    }
}

/// `Γ(d/2) B / (2^{d+5} π^{d/2}) inf_p`, for d = 1 or 2.
pub fn boundary_density_threshold(d: usize, b: f64, inf_p: f64) -> Result<f64> {
    let gamma_half_d = match d {
        1 => PI.sqrt(),
        2 => 1.0,
        _ => return Err(Error::UnsupportedDimension(d)),
    };
    Ok(gamma_half_d * b / (2f64.powi(d as i32 + 5) * PI.powf(d as f64 / 2.0)) * inf_p)
}

fn min_pairwise_distance(c: &ClusterVector) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..c.k() {
        for j in i + 1..c.k() {
            best = best.min(dist_sq(c.point(i), c.point(j)).sqrt());
        }
    }
    best
}

/// Largest density value along a face: dense sampling, then golden-section
/// search on the bracket around the best sample.
fn face_density_max(face: &BoundaryFace, dist: &SourceDistribution) -> Result<f64> {
    let f = |t: f64| dist.density(&face.at(t));
    if let FaceGeometry::Point(x) = face.geometry {
        return dist.density(&[x]);
    }
    let mut best = (f64::NEG_INFINITY, 0usize);
    for s in 0..=FACE_SAMPLES {
        let v = f(s as f64 / FACE_SAMPLES as f64)?;
        if v > best.0 {
            best = (v, s);
        }
    }
    let step = 1.0 / FACE_SAMPLES as f64;
    let (mut a, mut b) = (
        (best.1 as f64 - 1.0).max(0.0) * step,
        (best.1 as f64 + 1.0).min(FACE_SAMPLES as f64) * step,
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    let mut top = best.0.max(f1).max(f2);
    for _ in 0..GOLDEN_ITERS {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
        top = top.max(f1).max(f2);
    }
    Ok(top)
}

/// Compares the density on the optimal boundaries with the threshold
/// `Γ(d/2) B / (2^{d+5} π^{d/2}) inf_i P(V_i*)`.
pub fn check_boundary_density(
    dist: &SourceDistribution,
    opt: &OptimalSet,
) -> Result<ConditionReport> {
    if dist.is_atomic() {
        return Err(Error::NoDensity);
    }
    let d = dist.dim();
    let mut sup_f = 0.0f64;
    let mut b = f64::INFINITY;
    let mut inf_p = f64::INFINITY;
    let mut faces = 0usize;
    for c in opt.members() {
        b = b.min(min_pairwise_distance(c));
        for m in dist.cell_moments(c)? {
            inf_p = inf_p.min(m.mass);
        }
        for face in boundary_faces(c)? {
            sup_f = sup_f.max(face_density_max(&face, dist)?);
            faces += 1;
        }
    }
    let threshold = if b.is_finite() {
        boundary_density_threshold(d, b, inf_p)?
    } else {
        f64::INFINITY
    };
    let mut report = ConditionReport::new("boundary_density", sup_f, Relation::AtMost, threshold)
        .detail("sup_density_on_boundaries", sup_f)
        .detail("min_cluster_distance", b)
        .detail("min_cell_mass", inf_p)
        .detail("faces", faces as f64)
        .detail("optimal_codebooks", opt.members().len() as f64);
    if opt.k() == 1 {
        report.notes.push("a single cluster has no boundary".into());
    }
    Ok(report)
}

/// `R/2 > 3 rho` and `(R/2 - 3 rho)^2 >= 2 rho^2 d / (d + 2)`.
pub fn check_ball_separation(rho: f64, r: f64, d: usize) -> ConditionReport {
    let half_gap = r / 2.0 - 3.0 * rho;
    let lhs = half_gap * half_gap;
    let rhs = 2.0 * rho * rho * d as f64 / (d as f64 + 2.0);
    let mut report = ConditionReport::new("ball_separation", lhs, Relation::AtLeast, rhs)
        .detail("radius", rho)
        .detail("min_center_distance", r)
        .detail("half_gap", half_gap)
        .detail("dimension", d as f64);
    if half_gap <= 0.0 {
        report.pass = false;
        report.notes.push("R/2 - 3 rho is not positive".into());
    }
    report
}

/// [`check_ball_separation`] with `rho`, `R` and `d` read from a ball
/// mixture.
pub fn check_ball_separation_for(dist: &SourceDistribution) -> Result<ConditionReport> {
    let DistributionSpec::BallMixture { centers, radius } = dist.spec() else {
        return Err(Error::InvalidInput("not a ball mixture".into()));
    };
    let c = ClusterVector::new(centers.clone())?;
    Ok(check_ball_separation(
        *radius,
        min_pairwise_distance(&c),
        dist.dim(),
    ))
}

struct Polarization {
    k: usize,
    sigma: f64,
    b_tilde: f64,
    epsilon: f64,
    ratio: f64,
    first: f64,
    second: f64,
}

fn polarization(dist: &SourceDistribution) -> Result<Polarization> {
    let DistributionSpec::QuasiGaussianMixture {
        means,
        weights,
        sigma,
    } = dist.spec()
    else {
        return Err(Error::InvalidInput("not a quasi-Gaussian mixture".into()));
    };
    let epsilon = dist.normalizers().map_or(0.0, |n| n.epsilon);
    let k = means.len();
    let mut b_tilde = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            b_tilde = b_tilde.min((means[i][0] - means[j][0]).hypot(means[i][1] - means[j][1]));
        }
    }
    let p_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let p_max = weights.iter().copied().fold(0.0, f64::max);
    let s2 = sigma * sigma;
    let kf = k as f64;
    let (first, second) = if b_tilde.is_finite() {
        let bb = b_tilde * b_tilde;
        let first = 288.0 * kf * s2 / ((1.0 - epsilon) * bb * -(-bb / (288.0 * s2)).exp_m1());
        let second =
            96.0 * kf / ((1.0 - epsilon) * s2 * b_tilde * (b_tilde / (72.0 * s2)).exp_m1());
        (first, second)
    } else {
        (0.0, 0.0)
    };
    Ok(Polarization {
        k,
        sigma: *sigma,
        b_tilde,
        epsilon,
        ratio: p_min / p_max,
        first,
        second,
    })
}

/// `p_min / p_max >= max(T1, T2)` with
/// `T1 = 288 k sigma^2 / ((1 - eps) B~^2 (1 - exp(-B~^2 / (288 sigma^2))))` and
/// `T2 = 96 k / ((1 - eps) sigma^2 B~ (exp(B~ / (72 sigma^2)) - 1))`.
pub fn check_mixture_polarization(dist: &SourceDistribution) -> Result<ConditionReport> {
    let p = polarization(dist)?;
    let rhs = p.first.max(p.second);
    let mut report = ConditionReport::new("mixture_polarization", p.ratio, Relation::AtLeast, rhs)
        .detail("k", p.k as f64)
        .detail("sigma", p.sigma)
        .detail("min_mean_distance", p.b_tilde)
        .detail("epsilon", p.epsilon)
        .detail("weight_ratio", p.ratio)
        .detail("first_term", p.first)
        .detail("second_term", p.second);
    report.notes.push(format!(
        "binding term: {}",
        if p.first >= p.second {
            "first"
        } else {
            "second"
        }
    ));
    Ok(report)
}

/// Every mean within `B~/6` of some optimal cluster, and
/// `2 B~/3 <= B <= 4 B~/3`. The hypothesis `p_min / p_max >= T1` is
/// reported; when it fails the result is informational only.
pub fn verify_means_proximity(
    dist: &SourceDistribution,
    opt: &OptimalSet,
) -> Result<ConditionReport> {
    let p = polarization(dist)?;
    let DistributionSpec::QuasiGaussianMixture { means, .. } = dist.spec() else {
        unreachable!("checked by polarization")
    };
    let mut worst = 0.0f64;
    let mut b = f64::INFINITY;
    for c in opt.members() {
        b = b.min(min_pairwise_distance(c));
        for m in means {
            let nearest = c
                .points()
                .map(|x| dist_sq(x, m).sqrt())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
    }
    let radius = p.b_tilde / 6.0;
    let mut report = ConditionReport::new("centroid_proximity", worst, Relation::AtMost, radius)
        .detail("max_mean_to_cluster_distance", worst)
        .detail("min_mean_distance", p.b_tilde)
        .detail("min_cluster_distance", b)
        .detail("bracket_low", 2.0 * p.b_tilde / 3.0)
        .detail("bracket_high", 4.0 * p.b_tilde / 3.0)
        .detail("hypothesis_holds", f64::from(p.ratio >= p.first));
    if b.is_finite() {
        let in_bracket = 2.0 * p.b_tilde / 3.0 <= b && b <= 4.0 * p.b_tilde / 3.0;
        report
            .details
            .insert("bracket_holds".into(), f64::from(in_bracket));
        report.pass &= in_bracket;
    }
    if p.ratio < p.first {
        report
            .notes
            .push("weight ratio below the first polarization term: report only".into());
    }
    Ok(report)
}

/// Distances and variances for one probe codebook against one optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginRatios {
    /// `|c - c*(c)|^2` after relabelling.
    pub distance_sq: f64,
    /// `R(c) - R*`.
    pub loss: f64,
    /// `distance_sq / loss`.
    pub h1_ratio: f64,
    /// Largest `Var(gamma(c, X) - gamma(c*, X)) / |c - c*|^2` over the
    /// optimal set, each member aligned to `c`.
    pub h2_ratio: f64,
}

/// Margin ratios of a single probe.
pub fn margin_ratios(
    c: &ClusterVector,
    dist: &SourceDistribution,
    opt: &OptimalSet,
) -> Result<MarginRatios> {
    let loss = true_risk(c, dist)? - opt.risk();
    let (_, distance_sq) = nearest_optimal(c, opt)?;
    let mut h2_ratio = 0.0f64;
    for m in opt.members() {
        let (perm, d2) = best_alignment(c, m);
        if d2 == 0.0 {
            continue;
        }
        let (e1, e2) = dist.difference_moments(c, &m.permuted(&perm))?;
        let var = (e2 - e1 * e1).max(0.0);
        h2_ratio = h2_ratio.max(var / d2);
    }
    Ok(MarginRatios {
        distance_sq,
        loss,
        h1_ratio: distance_sq / loss,
        h2_ratio,
    })
}

/// Empirical lower bounds on the margin constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginEstimate {
    /// `max |c - c*(c)|^2 / (R(c) - R*)` over probes: a lower bound on `A1`.
    pub a1_lower_bound: f64,
    /// `max Var(gamma(c, .) - gamma(c*, .)) / |c - c*|^2`: a lower bound on `A2`.
    pub a2_lower_bound: f64,
    pub probes: usize,
    /// Probes skipped for the first ratio because their loss was below 1e-9.
    pub skipped: usize,
}

/// A point uniform in the unit ball of `R^d`.
fn unit_ball_point<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![2.0 * rng.random::<f64>() - 1.0];
    }
    let r = rng.random::<f64>().sqrt();
    let t = 2.0 * PI * rng.random::<f64>();
    vec![r * t.cos(), r * t.sin()]
}

/// Draws `n_probe` codebooks uniformly from `B(0, 1)^k` (probe `p` uses the
/// seed derived from `(seed, p)`) and reports the largest margin ratios.
pub fn estimate_margin_constants(
    dist: &SourceDistribution,
    opt: &OptimalSet,
    n_probe: usize,
    seed: u64,
) -> Result<MarginEstimate> {
    if n_probe == 0 {
        return Err(Error::InvalidInput("at least one probe is needed".into()));
    }
    let (k, d) = (opt.k(), opt.dim());
    let ratios: Vec<MarginRatios> = (0..n_probe)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_from_seed(derive_seed(seed, &[p as u64]));
            let coords = (0..k).flat_map(|_| unit_ball_point(&mut rng, d)).collect();
            margin_ratios(&ClusterVector::from_flat(d, coords)?, dist, opt)
        })
        .collect::<Result<_>>()?;
    let mut est = MarginEstimate {
        a1_lower_bound: 0.0,
        a2_lower_bound: 0.0,
        probes: n_probe,
        skipped: 0,
    };
    for r in ratios {
        if r.loss < MIN_PROBE_LOSS {
            est.skipped += 1;
        } else {
            est.a1_lower_bound = est.a1_lower_bound.max(r.h1_ratio);
        }
        est.a2_lower_bound = est.a2_lower_bound.max(r.h2_ratio);
    }
    Ok(est)
}
