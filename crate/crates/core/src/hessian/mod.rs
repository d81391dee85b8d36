//! Second derivatives of the distortion `c -> R(c)`.
//!
//! For a distribution with a continuous density `f`, the Hessian of `R` at
//! a codebook with distinct clusters is made of `d x d` blocks
//!
//! ```text
//! H_ii = 2 P(V_i) I - 2 sum_{l != i} r_il^{-1} ∫_{F_il} f(x) (x - c_i)(x - c_i)^T
//! H_ij =            + 2 r_ij^{-1}          ∫_{F_ij} f(x) (x - c_i)(x - c_j)^T
//! ```
//!
//! where `F_il` is the common face of the cells of `c_i` and `c_l`,
//! `r_il = |c_i - c_l|` and the face integral is with respect to the
//! `(d-1)`-dimensional Lebesgue measure. Differentiating the risk directly
//! gives the `+` sign on the off-diagonal blocks; [`OffDiagonalSign::Negated`]
//! computes the other sign for comparison.

mod jacobi;

pub use jacobi::symmetric_eigenvalues;

use serde::Serialize;

use crate::config::SYMMETRY_TOL;
use crate::distributions::SourceDistribution;
use crate::geometry::{boundary_faces, surface_integral, BoundaryFace, ClusterVector};
use crate::risk::true_risk;
use crate::{Error, Result};

/// Sign used for the off-diagonal blocks of the analytic Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OffDiagonalSign {
    /// `+2 r_ij^{-1} ∫ f (x - c_i)(x - c_j)^T`, the derivative of the risk.
    Derived,
    /// The opposite sign.
    Negated,
}

/// How a [`HessianMatrix`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianSource {
    Analytic(OffDiagonalSign),
    FiniteDifference { step: f64 },
    Supplied,
}

/// A symmetric `kd x kd` matrix with a `k x k` grid of `d x d` blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianMatrix {
    k: usize,
    d: usize,
    entries: Vec<f64>,
    source: HessianSource,
}

impl HessianMatrix {
    /// Wraps row-major entries.
    pub fn new(k: usize, d: usize, entries: Vec<f64>, source: HessianSource) -> Result<Self> {
        let n = k * d;
        if n == 0 || entries.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "{} entries do not form a {n} x {n} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            k,
            d,
            entries,
            source,
        })
    }

    /// A matrix given directly by its rows, with `k = n` and `d = 1`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("rows of unequal length".into()));
        }
        Self::new(n, 1, rows.concat(), HessianSource::Supplied)
    }

    pub fn size(&self) -> usize {
        self.k * self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn source(&self) -> HessianSource {
        self.source
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.size() + c]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.size())
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// The `d x d` block `(i, j)`, row-major.
    pub fn block(&self, i: usize, j: usize) -> Vec<f64> {
        let d = self.d;
        (0..d)
            .flat_map(|a| (0..d).map(move |b| (a, b)))
            .map(|(a, b)| self.get(i * d + a, j * d + b))
            .collect()
    }

    /// `max |H - H^T|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.size();
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r + 1..n {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// `max |H - G|` entrywise.
    pub fn max_abs_diff(&self, other: &HessianMatrix) -> f64 {
        assert_eq!(self.size(), other.size());
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        symmetric_eigenvalues(&self.entries, self.size())
    }

    /// One CSV line per row, `{:.16e}` entries.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.entries.chunks(self.size()) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Boundary term `∫_F f (x - c_i)(x - c_i)^T` and `∫_F f (x - c_i)(x - c_j)^T`
/// on the face `F` between `c_i` and `c_j`, as two row-major `d x d` blocks.
fn face_terms(
    face: &BoundaryFace,
    c: &ClusterVector,
    dist: &SourceDistribution,
) -> Result<([f64; 4], [f64; 4])> {
    let (ci, cj) = (c.point2(face.i), c.point2(face.j));
    let integrand = |p: &[f64], f: f64| -> [f64; 8] {
        let u = [p[0] - ci[0], p.get(1).map_or(0.0, |y| y - ci[1])];
        let v = [p[0] - cj[0], p.get(1).map_or(0.0, |y| y - cj[1])];
        [
            f * u[0] * u[0],
            f * u[0] * u[1],
            f * u[1] * u[0],
            f * u[1] * u[1],
            f * u[0] * v[0],
            f * u[0] * v[1],
            f * u[1] * v[0],
            f * u[1] * v[1],
        ]
    };
    let mut total = [0.0; 8];
    if c.dim() == 1 {
        total = surface_integral(face, |p| integrand(p, dist.density(p).unwrap_or(0.0)))?;
    } else {
        // Split by continuous piece so that every integrand is smooth.
        for (disk, f) in dist.planar_pieces() {
            let Some(part) = face.clip_to_disk(&disk) else {
                continue;
            };
            let v = surface_integral(&part, |p| integrand(p, f(p[0], p[1])))?;
            for (t, x) in total.iter_mut().zip(v) {
                *t += x;
            }
        }
    }
    let mut uu = [0.0; 4];
    let mut uv = [0.0; 4];
    uu.copy_from_slice(&total[..4]);
    uv.copy_from_slice(&total[4..]);
    Ok((uu, uv))
}

/// The boundary-integral Hessian of `R` at `c`.
pub fn analytic_hessian(
    c: &ClusterVector,
    dist: &SourceDistribution,
    sign: OffDiagonalSign,
) -> Result<HessianMatrix> {
    if dist.is_atomic() {
        return Err(Error::NoDensity);
    }
    if c.dim() != dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            got: c.dim(),
        });
    }
    let faces = boundary_faces(c)?;
    let (k, d) = (c.k(), c.dim());
    let n = k * d;
    let mut h = vec![0.0; n * n];
    let moments = dist.cell_moments(c)?;
    for (i, m) in moments.iter().enumerate() {
        for a in 0..d {
            h[(i * d + a) * n + i * d + a] = 2.0 * m.mass;
        }
    }
    let off_sign = match sign {
        OffDiagonalSign::Derived => 2.0,
        OffDiagonalSign::Negated => -2.0,
    };
    for face in &faces {
        let (i, j) = (face.i, face.j);
        let r = crate::geometry::dist_sq(c.point(i), c.point(j)).sqrt();
        // The face term seen from c_j: swap the roles of the two clusters.
        let swapped = BoundaryFace {
            i: j,
            j: i,
            ..*face
        };
        let (uu_i, uv) = face_terms(face, c, dist)?;
        let (uu_j, _) = face_terms(&swapped, c, dist)?;
        for a in 0..d {
            for b in 0..d {
                h[(i * d + a) * n + i * d + b] -= 2.0 / r * uu_i[a * 2 + b];
                h[(j * d + a) * n + j * d + b] -= 2.0 / r * uu_j[a * 2 + b];
                h[(i * d + a) * n + j * d + b] += off_sign / r * uv[a * 2 + b];
                h[(j * d + b) * n + i * d + a] += off_sign / r * uv[a * 2 + b];
            }
        }
    }
    HessianMatrix::new(k, d, h, HessianSource::Analytic(sign))
}

/// Central second differences of `R`, symmetrised.
pub fn finite_difference_hessian(
    c: &ClusterVector,
    dist: &SourceDistribution,
    step: f64,
) -> Result<HessianMatrix> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidInput(
            "finite-difference step must be positive".into(),
        ));
    }
    let d = c.dim();
    let base = c.as_flat().to_vec();
    let n = base.len();
    let risk_at = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut x = base.clone();
        for &(t, s) in shifts {
            x[t] += s;
        }
        true_risk(&ClusterVector::from_flat(d, x)?, dist)
    };
    let r0 = risk_at(&[])?;
    let h = step;
    let mut out = vec![0.0; n * n];
    for a in 0..n {
        let rp = risk_at(&[(a, h)])?;
        let rm = risk_at(&[(a, -h)])?;
        out[a * n + a] = (rp - 2.0 * r0 + rm) / (h * h);
        for b in a + 1..n {
            let pp = risk_at(&[(a, h), (b, h)])?;
            let pm = risk_at(&[(a, h), (b, -h)])?;
            let mp = risk_at(&[(a, -h), (b, h)])?;
            let mm = risk_at(&[(a, -h), (b, -h)])?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            out[a * n + b] = v;
            out[b * n + a] = v;
        }
    }
    HessianMatrix::new(c.k(), d, out, HessianSource::FiniteDifference { step })
}

/// Outcome of a positive-definiteness test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdVerdict {
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
    /// The eigenvalue threshold actually applied.
    pub threshold: f64,
}

/// `lambda_min(H) > rel_tol * max_i |H_ii|`, with `lambda_min` from cyclic
/// Jacobi rotations.
pub fn is_positive_definite(h: &HessianMatrix, rel_tol: f64) -> Result<PdVerdict> {
    let asym = h.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let scale = (0..h.size()).map(|i| h.get(i, i).abs()).fold(0.0, f64::max);
    let min_eigenvalue = h.eigenvalues()[0];
    let threshold = rel_tol * scale;
    Ok(PdVerdict {
        positive_definite: min_eigenvalue > threshold,
        min_eigenvalue,
        threshold,
    })
}
