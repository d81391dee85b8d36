//! Source distributions.
//!
//! Four families are supported:
//!
//! * **ball mixtures**: `k` balls of common radius, uniform inside each
//!   ball, mass `1/k` per ball (d = 1 or 2);
//! * **quasi-Gaussian mixtures** (d = 2): isotropic Gaussians of common
//!   variance truncated to the unit disk and renormalised component-wise,
//!   so that component `i` carries exactly its weight `p_i`;
//! * the **tail counter-example** (d = 1): mass 1/3 uniform on `[0, eta]`,
//!   1/3 uniform on `[R, R + eta]` and 1/3 on an exponential tail starting
//!   at `2R - 1 + eta/2`;
//! * **finite atoms** (d = 1 or 2).
//!
//! Every continuous family is described internally as a list of pieces with
//! a simple support (an interval or a disk) and a smooth density on it;
//! cell integrals are exact in one dimension and use nested Gauss–Kronrod
//! quadrature in two, with closed forms when a ball or Gaussian sits well
//! inside a single cell.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{MASS_TOL, PLANE_TOL};
use crate::geometry::{cell_half_planes, line_cells, nearest, ClusterVector, Sample, UNIT_DISK};
use crate::quadrature::{integrate_region, ConvexRegion, Disk, HalfPlane};
use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// Past this many standard deviations a Gaussian factor underflows.
const GAUSS_CUTOFF: f64 = 38.5;

/// Serializable parameters of a source distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    BallMixture {
        centers: Vec<Vec<f64>>,
        radius: f64,
    },
    QuasiGaussianMixture {
        means: Vec<[f64; 2]>,
        weights: Vec<f64>,
        sigma: f64,
    },
    TailCounterexample {
        eta: f64,
        r: f64,
    },
    FiniteAtoms {
        atoms: Vec<Vec<f64>>,
        probabilities: Vec<f64>,
    },
}

/// Per-cell integrals of a distribution against a codebook.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellMoments {
    /// `P(V_j)`.
    pub mass: f64,
    /// `∫_{V_j} (x - c_j) dP`; the second entry is 0 in one dimension.
    pub offset: [f64; 2],
    /// `∫_{V_j} |x - c_j|^2 dP`.
    pub distortion: f64,
}

impl CellMoments {
    fn add(&mut self, other: &CellMoments) {
        self.mass += other.mass;
        self.offset[0] += other.offset[0];
        self.offset[1] += other.offset[1];
        self.distortion += other.distortion;
    }
}

/// Normalising constants of a quasi-Gaussian mixture: `N_i` is the mass
/// that the `i`-th untruncated Gaussian puts on the unit disk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalizers {
    pub values: Vec<f64>,
    /// `1 - min_i N_i`.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum LinePiece {
    /// Constant density on `[lo, hi]`.
    Uniform { lo: f64, hi: f64, density: f64 },
    /// `exp(ln_scale - x)` on `(start, inf)`.
    ExpTail { start: f64, ln_scale: f64 },
}

/// `sum_{i<=p} p!/(p-i)! u^{p-i}`: the antiderivative factor of
/// `u^p e^{-u}`.
fn exp_poly(p: u32, u: f64) -> f64 {
    match p {
        0 => 1.0,
        1 => u + 1.0,
        2 => u * u + 2.0 * u + 2.0,
        3 => ((u + 3.0) * u + 6.0) * u + 6.0,
        4 => (((u + 4.0) * u + 12.0) * u + 24.0) * u + 24.0,
        _ => unreachable!("moments above order 4 are not needed"),
    }
}

impl LinePiece {
    fn density(&self, x: f64) -> f64 {
        match *self {
            LinePiece::Uniform { lo, hi, density } => {
                if (lo..=hi).contains(&x) {
                    density
                } else {
                    0.0
                }
            }
            LinePiece::ExpTail { start, ln_scale } => {
                if x > start {
                    (ln_scale - x).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫_{[a,b] ∩ support} (x - shift)^p f(x) dx`, exactly.
    fn moment(&self, a: f64, b: f64, shift: f64, p: u32) -> f64 {
        match *self {
            LinePiece::Uniform { lo, hi, density } => {
                let (a, b) = (a.max(lo), b.min(hi));
                if b <= a {
                    return 0.0;
                }
                let q = (p + 1) as f64;
                density * ((b - shift).powi(p as i32 + 1) - (a - shift).powi(p as i32 + 1)) / q
            }
            LinePiece::ExpTail { start, ln_scale } => {
                let a = a.max(start);
                if b <= a {
                    return 0.0;
                }
                let head = (ln_scale - a).exp() * exp_poly(p, a - shift);
                let tail = if b.is_finite() {
                    (ln_scale - b).exp() * exp_poly(p, b - shift)
                } else {
                    0.0
                };
                head - tail
            }
        }
    }

    fn mass(&self) -> f64 {
        self.moment(f64::NEG_INFINITY, f64::INFINITY, 0.0, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum DiskDensity {
    Uniform(f64),
    Gaussian {
        mean: [f64; 2],
        sigma: f64,
        /// `p_i / (N_i 2 pi sigma^2)`.
        peak: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct DiskPiece {
    disk: Disk,
    density: DiskDensity,
}

impl DiskPiece {
    fn density(&self, x: f64, y: f64) -> f64 {
        let Disk { center, radius } = self.disk;
        if (x - center[0]).powi(2) + (y - center[1]).powi(2) > radius * radius {
            return 0.0;
        }
        match self.density {
            DiskDensity::Uniform(v) => v,
            DiskDensity::Gaussian { mean, sigma, peak } => {
                let r2 = (x - mean[0]).powi(2) + (y - mean[1]).powi(2);
                peak * (-r2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    fn hints(&self) -> Vec<([f64; 2], f64)> {
        match self.density {
            DiskDensity::Uniform(_) => Vec::new(),
            DiskDensity::Gaussian { mean, sigma, .. } => vec![(mean, sigma)],
        }
    }

    /// Location and scale used to decide whether the piece sits entirely on
    /// one side of a bisector.
    fn footprint(&self) -> ([f64; 2], f64) {
        match self.density {
            DiskDensity::Uniform(_) => (self.disk.center, self.disk.radius),
            DiskDensity::Gaussian { mean, sigma, .. } => (mean, GAUSS_CUTOFF * sigma),
        }
    }

    /// Mass, mean and `E|x - m|^2` (about the mean) when the piece is not
    /// cut by any boundary.
    fn whole_moments(&self) -> (f64, [f64; 2], f64) {
        match self.density {
            DiskDensity::Uniform(v) => {
                let r = self.disk.radius;
                (v * PI * r * r, self.disk.center, r * r / 2.0)
            }
            DiskDensity::Gaussian { mean, sigma, peak } => {
                (peak * 2.0 * PI * sigma * sigma, mean, 2.0 * sigma * sigma)
            }
        }
    }

    /// True when the Gaussian's support within the cutoff lies inside the
    /// piece's disk, so the closed form moments apply.
    fn footprint_inside_disk(&self) -> bool {
        let (loc, scale) = self.footprint();
        let Disk { center, radius } = self.disk;
        (loc[0] - center[0]).hypot(loc[1] - center[1]) + scale <= radius
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Support {
    Line(Vec<LinePiece>),
    Plane(Vec<DiskPiece>),
    Atoms(Vec<(Vec<f64>, f64)>),
}

/// A validated source distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDistribution {
    spec: DistributionSpec,
    dim: usize,
    support: Support,
    normalizers: Option<Normalizers>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn norm2(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Normalising constants of isotropic Gaussians `N(m_i, sigma^2 I)`
/// restricted to the unit disk.
pub fn normalizers(means: &[[f64; 2]], sigma: f64) -> Result<Normalizers> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma must be positive"));
    }
    let mut values = Vec::with_capacity(means.len());
    for &m in means {
        if m[0].hypot(m[1]) > 1.0 {
            return Err(invalid("quasi-Gaussian means must lie in the unit disk"));
        }
        let piece = DiskPiece {
            disk: UNIT_DISK,
            density: DiskDensity::Gaussian {
                mean: m,
                sigma,
                peak: 1.0 / (2.0 * PI * sigma * sigma),
            },
        };
        let n = if piece.footprint_inside_disk() {
            1.0
        } else {
            let region = ConvexRegion {
                disk: UNIT_DISK,
                planes: vec![],
            };
            let est = integrate_region(
                &region,
                |x, y| [piece.density(x, y)],
                &piece.hints(),
                PLANE_TOL,
            );
            if !est.converged {
                return Err(Error::QuadratureFailure(format!(
                    "normalizer for mean {m:?}, error {:e}",
                    est.error
                )));
            }
            est.value[0]
        };
        values.push(n.min(1.0));
    }
    let epsilon = 1.0 - values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Normalizers { values, epsilon })
}

impl SourceDistribution {
    /// Validates the parameters, builds the piece description and checks
    /// that the total mass is 1.
    pub fn new(spec: DistributionSpec) -> Result<Self> {
        let (dim, support, normalizers) = match &spec {
            DistributionSpec::BallMixture { centers, radius } => {
                let radius = *radius;
                if centers.is_empty() {
                    return Err(invalid("a ball mixture needs at least one ball"));
                }
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(invalid("ball radius must be positive"));
                }
                let dim = centers[0].len();
                if !(1..=2).contains(&dim) {
                    return Err(Error::UnsupportedDimension(dim));
                }
                for z in centers {
                    if z.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: z.len(),
                        });
                    }
                    if z.iter().any(|v| !v.is_finite()) {
                        return Err(invalid("non-finite ball center"));
                    }
                    if norm2(z) + radius > 1.0 + 1e-12 {
                        return Err(invalid(format!(
                            "ball around {z:?} with radius {radius} leaves the unit ball"
                        )));
                    }
                }
                let k = centers.len() as f64;
                let support = if dim == 1 {
                    Support::Line(
                        centers
                            .iter()
                            .map(|z| LinePiece::Uniform {
                                lo: z[0] - radius,
                                hi: z[0] + radius,
                                density: 1.0 / (k * 2.0 * radius),
                            })
                            .collect(),
                    )
                } else {
                    Support::Plane(
                        centers
                            .iter()
                            .map(|z| DiskPiece {
                                disk: Disk {
                                    center: [z[0], z[1]],
                                    radius,
                                },
                                density: DiskDensity::Uniform(1.0 / (k * PI * radius * radius)),
                            })
                            .collect(),
                    )
                };
                (dim, support, None)
            }
            DistributionSpec::QuasiGaussianMixture {
                means,
                weights,
                sigma,
            } => {
                if means.is_empty() || means.len() != weights.len() {
                    return Err(invalid("need one weight per mean"));
                }
                if weights.iter().any(|w| !(*w > 0.0)) {
                    return Err(invalid("mixture weights must be positive"));
                }
                if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(invalid("mixture weights must sum to 1"));
                }
                if means.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(invalid("non-finite mean"));
                }
                if means.len() >= 2 {
                    let sep = min_separation(means);
                    if !(sep > 0.0) {
                        return Err(invalid("mixture means must be distinct"));
                    }
                    for m in means {
                        if m[0].hypot(m[1]) + sep / 3.0 > 1.0 + 1e-12 {
                            return Err(invalid(format!(
                                "ball of radius {:.4} around mean {m:?} leaves the unit disk",
                                sep / 3.0
                            )));
                        }
                    }
                }
                let norms = normalizers(means, *sigma)?;
                let pieces = means
                    .iter()
                    .zip(weights)
                    .zip(&norms.values)
                    .map(|((m, p), n)| DiskPiece {
                        disk: UNIT_DISK,
                        density: DiskDensity::Gaussian {
                            mean: *m,
                            sigma: *sigma,
                            peak: p / (n * 2.0 * PI * sigma * sigma),
                        },
                    })
                    .collect();
                (2, Support::Plane(pieces), Some(norms))
            }
            DistributionSpec::TailCounterexample { eta, r } => {
                let (eta, r) = (*eta, *r);
                if !(eta > 0.0 && r > 0.0) || !eta.is_finite() || !r.is_finite() {
                    return Err(invalid("eta and R must be positive"));
                }
                let start = 2.0 * r - 1.0 + eta / 2.0;
                let ln_q = eta / 2.0 + 2.0 * r - 1.0 - 3f64.ln();
                let pieces = vec![
                    LinePiece::Uniform {
                        lo: 0.0,
                        hi: eta,
                        density: 1.0 / (3.0 * eta),
                    },
                    LinePiece::Uniform {
                        lo: r,
                        hi: r + eta,
                        density: 1.0 / (3.0 * eta),
                    },
                    LinePiece::ExpTail {
                        start,
                        ln_scale: ln_q,
                    },
                ];
                (1, Support::Line(pieces), None)
            }
            DistributionSpec::FiniteAtoms {
                atoms,
                probabilities,
            } => {
                if atoms.is_empty() || atoms.len() != probabilities.len() {
                    return Err(invalid("need one probability per atom"));
                }
                let dim = atoms[0].len();
                if !(1..=2).contains(&dim) {
                    return Err(Error::UnsupportedDimension(dim));
                }
                if atoms.iter().any(|a| a.len() != dim) {
                    return Err(invalid("atoms of mixed dimension"));
                }
                if atoms.iter().flatten().any(|v| !v.is_finite())
                    || probabilities.iter().any(|p| !(*p >= 0.0))
                {
                    return Err(invalid(
                        "atoms must be finite with non-negative probabilities",
                    ));
                }
                let support = Support::Atoms(
                    atoms
                        .iter()
                        .cloned()
                        .zip(probabilities.iter().copied())
                        .collect(),
                );
                (dim, support, None)
            }
        };
        let dist = Self {
            spec,
            dim,
            support,
            normalizers,
        };
        let total = dist.total_mass()?;
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("total mass {total} differs from 1")));
        }
        Ok(dist)
    }

    pub fn ball_mixture(centers: Vec<Vec<f64>>, radius: f64) -> Result<Self> {
        Self::new(DistributionSpec::BallMixture { centers, radius })
    }

    pub fn quasi_gaussian(means: Vec<[f64; 2]>, weights: Vec<f64>, sigma: f64) -> Result<Self> {
        Self::new(DistributionSpec::QuasiGaussianMixture {
            means,
            weights,
            sigma,
        })
    }

    pub fn tail_counterexample(eta: f64, r: f64) -> Result<Self> {
        Self::new(DistributionSpec::TailCounterexample { eta, r })
    }

    pub fn finite_atoms(atoms: Vec<Vec<f64>>, probabilities: Vec<f64>) -> Result<Self> {
        Self::new(DistributionSpec::FiniteAtoms {
            atoms,
            probabilities,
        })
    }

    /// The uniform law on `[0, 1]`, as a single ball of radius 1/2.
    pub fn uniform_unit_interval() -> Self {
        Self::ball_mixture(vec![vec![0.5]], 0.5).expect("valid uniform law")
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.support, Support::Atoms(_))
    }

    /// Normalising constants, for quasi-Gaussian mixtures only.
    pub fn normalizers(&self) -> Option<&Normalizers> {
        self.normalizers.as_ref()
    }

    /// Centers of the balls, means of the Gaussians, atoms, or the centers
    /// of mass of the three counter-example pieces.
    pub fn component_locations(&self) -> Vec<Vec<f64>> {
        match &self.spec {
            DistributionSpec::BallMixture { centers, .. } => centers.clone(),
            DistributionSpec::QuasiGaussianMixture { means, .. } => {
                means.iter().map(|m| m.to_vec()).collect()
            }
            DistributionSpec::FiniteAtoms { atoms, .. } => atoms.clone(),
            DistributionSpec::TailCounterexample { .. } => match &self.support {
                Support::Line(pieces) => pieces
                    .iter()
                    .map(|p| {
                        let m = p.mass();
                        vec![p.moment(f64::NEG_INFINITY, f64::INFINITY, 0.0, 1) / m]
                    })
                    .collect(),
                _ => unreachable!(),
            },
        }
    }

    /// Density at `x`; atomic laws have none.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite point"));
        }
        match &self.support {
            Support::Line(pieces) => Ok(pieces.iter().map(|p| p.density(x[0])).sum()),
            Support::Plane(pieces) => Ok(pieces.iter().map(|p| p.density(x[0], x[1])).sum()),
            Support::Atoms(_) => Err(Error::NoDensity),
        }
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, seed: u64, n: usize) -> Result<Sample> {
        if n == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        let mut rng = rng_from_seed(seed);
        let mut coords = Vec::with_capacity(n * self.dim);
        match &self.spec {
            DistributionSpec::BallMixture { centers, radius } => {
                for _ in 0..n {
                    let z = &centers[rng.random_range(0..centers.len())];
                    if self.dim == 1 {
                        coords.push(z[0] + radius * (2.0 * rng.random::<f64>() - 1.0));
                    } else {
                        let rho = radius * rng.random::<f64>().sqrt();
                        let theta = 2.0 * PI * rng.random::<f64>();
                        coords.push(z[0] + rho * theta.cos());
                        coords.push(z[1] + rho * theta.sin());
                    }
                }
            }
            DistributionSpec::QuasiGaussianMixture {
                means,
                weights,
                sigma,
            } => {
                for _ in 0..n {
                    let m = means[pick(&mut rng, weights)];
                    loop {
                        let gx: f64 = StandardNormal.sample(&mut rng);
                        let gy: f64 = StandardNormal.sample(&mut rng);
                        let (x, y) = (m[0] + sigma * gx, m[1] + sigma * gy);
                        if x * x + y * y <= 1.0 {
                            coords.push(x);
                            coords.push(y);
                            break;
                        }
                    }
                }
            }
            DistributionSpec::TailCounterexample { eta, r } => {
                let start = 2.0 * r - 1.0 + eta / 2.0;
                for _ in 0..n {
                    let x = match rng.random_range(0..3u8) {
                        0 => eta * rng.random::<f64>(),
                        1 => r + eta * rng.random::<f64>(),
                        _ => {
                            let e: f64 = Exp1.sample(&mut rng);
                            start + e
                        }
                    };
                    coords.push(x);
                }
            }
            DistributionSpec::FiniteAtoms {
                atoms,
                probabilities,
            } => {
                for _ in 0..n {
                    coords.extend_from_slice(&atoms[pick(&mut rng, probabilities)]);
                }
            }
        }
        Sample::from_flat(self.dim, coords)
    }

    /// `E|X|^2`.
    pub fn second_moment(&self) -> Result<f64> {
        let origin = ClusterVector::from_flat(self.dim, vec![0.0; self.dim])?;
        Ok(self.cell_moments(&origin)?[0].distortion)
    }

    /// Mean of the distribution.
    pub fn mean(&self) -> Result<Vec<f64>> {
        let origin = ClusterVector::from_flat(self.dim, vec![0.0; self.dim])?;
        let m = self.cell_moments(&origin)?[0];
        Ok(m.offset[..self.dim].to_vec())
    }

    fn total_mass(&self) -> Result<f64> {
        let origin = ClusterVector::from_flat(self.dim, vec![0.0; self.dim])?;
        Ok(self.cell_moments(&origin)?[0].mass)
    }

    fn check_codebook(&self, c: &ClusterVector) -> Result<()> {
        if c.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: c.dim(),
            });
        }
        Ok(())
    }

    /// Mass, first moment about `c_j` and distortion of every Voronoi cell
    /// of `c`.
    pub fn cell_moments(&self, c: &ClusterVector) -> Result<Vec<CellMoments>> {
        self.check_codebook(c)?;
        let k = c.k();
        let mut out = vec![CellMoments::default(); k];
        match &self.support {
            Support::Atoms(atoms) => {
                for (a, p) in atoms {
                    let (j, d2) = nearest(c, a);
                    let cj = c.point(j);
                    out[j].mass += p;
                    for (t, (x, m)) in a.iter().zip(cj).enumerate() {
                        out[j].offset[t] += p * (x - m);
                    }
                    out[j].distortion += p * d2;
                }
            }
            Support::Line(pieces) => {
                for (j, lo, hi) in line_cells(c) {
                    let cj = c.point(j)[0];
                    for piece in pieces {
                        out[j].mass += piece.moment(lo, hi, cj, 0);
                        out[j].offset[0] += piece.moment(lo, hi, cj, 1);
                        out[j].distortion += piece.moment(lo, hi, cj, 2);
                    }
                }
            }
            Support::Plane(pieces) => {
                for (j, cell) in out.iter_mut().enumerate() {
                    let Some(planes) = cell_half_planes(c, j) else {
                        continue;
                    };
                    let cj = c.point2(j);
                    for piece in pieces {
                        cell.add(&plane_piece_moments(piece, &planes, cj)?);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `E[g]` and `E[g^2]` for `g(x) = gamma(a, x) - gamma(b, x)`.
    pub(crate) fn difference_moments(
        &self,
        a: &ClusterVector,
        b: &ClusterVector,
    ) -> Result<(f64, f64)> {
        self.check_codebook(a)?;
        self.check_codebook(b)?;
        match &self.support {
            Support::Atoms(atoms) => Ok(atoms.iter().fold((0.0, 0.0), |(m1, m2), (x, p)| {
                let g = nearest(a, x).1 - nearest(b, x).1;
                (m1 + p * g, m2 + p * g * g)
            })),
            Support::Line(pieces) => {
                let cells_a = line_cells(a);
                let cells_b = line_cells(b);
                let mut cuts: Vec<f64> = cells_a
                    .iter()
                    .chain(&cells_b)
                    .map(|cell| cell.2)
                    .filter(|x| x.is_finite())
                    .collect();
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let mut edges = vec![f64::NEG_INFINITY];
                edges.extend(cuts);
                edges.push(f64::INFINITY);
                let (mut m1, mut m2) = (0.0, 0.0);
                for w in edges.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    let probe = match (lo.is_finite(), hi.is_finite()) {
                        (true, true) => 0.5 * (lo + hi),
                        (true, false) => lo + 1.0,
                        (false, true) => hi - 1.0,
                        (false, false) => 0.0,
                    };
                    let ca = a.point(nearest(a, &[probe]).0)[0];
                    let cb = b.point(nearest(b, &[probe]).0)[0];
                    // g(x) = 2 (cb - ca) (x - (ca + cb) / 2) on this interval.
                    let slope = 2.0 * (cb - ca);
                    let shift = 0.5 * (ca + cb);
                    for piece in pieces {
                        m1 += slope * piece.moment(lo, hi, shift, 1);
                        m2 += slope * slope * piece.moment(lo, hi, shift, 2);
                    }
                }
                Ok((m1, m2))
            }
            Support::Plane(pieces) => {
                let (mut m1, mut m2) = (0.0, 0.0);
                for ia in 0..a.k() {
                    let Some(pa) = cell_half_planes(a, ia) else {
                        continue;
                    };
                    for ib in 0..b.k() {
                        let Some(pb) = cell_half_planes(b, ib) else {
                            continue;
                        };
                        let mut planes = pa.clone();
                        planes.extend(pb.iter().copied());
                        let (ca, cb) = (a.point2(ia), b.point2(ib));
                        for piece in pieces {
                            let (e1, e2) = plane_piece_difference(piece, &planes, ca, cb)?;
                            m1 += e1;
                            m2 += e2;
                        }
                    }
                }
                Ok((m1, m2))
            }
        }
    }

    /// Support disk and density of every continuous planar piece; face
    /// integrals are split along these so each integrand is smooth.
    pub(crate) fn planar_pieces(
        &self,
    ) -> Vec<(Disk, Box<dyn Fn(f64, f64) -> f64 + Send + Sync + '_>)> {
        match &self.support {
            Support::Plane(pieces) => pieces
                .iter()
                .map(|p| {
                    let f: Box<dyn Fn(f64, f64) -> f64 + Send + Sync> =
                        Box::new(move |x, y| p.density(x, y));
                    (p.disk, f)
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

fn min_separation(means: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in means.iter().enumerate() {
        for b in &means[i + 1..] {
            best = best.min((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    best
}

fn pick<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Signed distance from `p` to the boundary of a half-plane (negative
/// inside).
fn signed_distance(plane: &HalfPlane, p: [f64; 2]) -> f64 {
    (plane.normal[0] * p[0] + plane.normal[1] * p[1] - plane.offset)
        / plane.normal[0].hypot(plane.normal[1])
}

enum Placement {
    Inside,
    Outside,
    Cut,
}

fn placement(piece: &DiskPiece, planes: &[HalfPlane]) -> Placement {
    let (loc, scale) = piece.footprint();
    let mut inside = true;
    for plane in planes {
        let s = signed_distance(plane, loc);
        if s >= scale {
            return Placement::Outside;
        }
        if s > -scale {
            inside = false;
        }
    }
    if inside && piece.footprint_inside_disk() {
        Placement::Inside
    } else {
        Placement::Cut
    }
}

fn plane_piece_moments(
    piece: &DiskPiece,
    planes: &[HalfPlane],
    cj: [f64; 2],
) -> Result<CellMoments> {
    match placement(piece, planes) {
        Placement::Outside => Ok(CellMoments::default()),
        Placement::Inside => {
            let (mass, mean, spread) = piece.whole_moments();
            let d = [mean[0] - cj[0], mean[1] - cj[1]];
            Ok(CellMoments {
                mass,
                offset: [mass * d[0], mass * d[1]],
                distortion: mass * (d[0] * d[0] + d[1] * d[1] + spread),
            })
        }
        Placement::Cut => {
            let region = ConvexRegion {
                disk: piece.disk,
                planes: planes.to_vec(),
            };
            let est = integrate_region(
                &region,
                |x, y| {
                    let f = piece.density(x, y);
                    let (dx, dy) = (x - cj[0], y - cj[1]);
                    [f, f * dx, f * dy, f * (dx * dx + dy * dy)]
                },
                &piece.hints(),
                PLANE_TOL,
            );
            if !est.converged {
                return Err(Error::QuadratureFailure(format!(
                    "cell of cluster {cj:?}, error {:e}",
                    est.error
                )));
            }
            let [mass, ox, oy, dist] = est.value;
            Ok(CellMoments {
                mass,
                offset: [ox, oy],
                distortion: dist,
            })
        }
    }
}

fn plane_piece_difference(
    piece: &DiskPiece,
    planes: &[HalfPlane],
    ca: [f64; 2],
    cb: [f64; 2],
) -> Result<(f64, f64)> {
    // g(x) = 2 x.(cb - ca) + |ca|^2 - |cb|^2 is affine on the region.
    let grad = [2.0 * (cb[0] - ca[0]), 2.0 * (cb[1] - ca[1])];
    let constant = (ca[0] * ca[0] + ca[1] * ca[1]) - (cb[0] * cb[0] + cb[1] * cb[1]);
    let g = |x: f64, y: f64| grad[0] * x + grad[1] * y + constant;
    match placement(piece, planes) {
        Placement::Outside => Ok((0.0, 0.0)),
        Placement::Inside => {
            let (mass, mean, spread) = piece.whole_moments();
            let gm = g(mean[0], mean[1]);
            // Var(grad . X) = |grad|^2 * spread / 2 for isotropic pieces.
            let var = (grad[0] * grad[0] + grad[1] * grad[1]) * spread / 2.0;
            Ok((mass * gm, mass * (gm * gm + var)))
        }
        Placement::Cut => {
            let region = ConvexRegion {
                disk: piece.disk,
                planes: planes.to_vec(),
            };
            let est = integrate_region(
                &region,
                |x, y| {
                    let f = piece.density(x, y);
                    let v = g(x, y);
                    [f * v, f * v * v]
                },
                &piece.hints(),
                PLANE_TOL,
            );
            if !est.converged {
                return Err(Error::QuadratureFailure(format!(
                    "contrast difference on cells of {ca:?} and {cb:?}, error {:e}",
                    est.error
                )));
            }
            Ok((est.value[0], est.value[1]))
        }
    }
}
