//! Codebooks, nearest-cluster assignment and Voronoi cell geometry in one
//! and two dimensions.
//!
//! Cells are indexed from 0. A point equidistant from several clusters is
//! assigned to the lowest index, so a duplicated cluster never owns any
//! point; this does not affect risks for distributions with a density.

use serde::{Deserialize, Serialize};

use crate::config::SURFACE_TOL;
use crate::distributions::SourceDistribution;
use crate::quadrature::{panel_legendre, Disk, HalfPlane};
use crate::{Error, Result};

/// Gauss–Legendre order used on every panel of a face.
const FACE_RULE_ORDER: usize = 10;

/// Tolerance used when checking that a face point is equidistant from its
/// two clusters and no closer to any other.
pub const FACE_SLACK: f64 = 1e-10;

/// An ordered list of `k` cluster points in `R^d` (the codebook).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ClusterVector {
    dim: usize,
    coords: Vec<f64>,
}

impl ClusterVector {
    /// Builds a codebook from a list of points, all of dimension 1 or 2.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidInput("a codebook needs at least one cluster".into()))?;
        let dim = first.len();
        if points.iter().any(|p| p.len() != dim) {
            let got = points
                .iter()
                .map(Vec::len)
                .find(|&l| l != dim)
                .unwrap_or(dim);
            return Err(Error::DimensionMismatch { expected: dim, got });
        }
        Self::from_flat(dim, points.into_iter().flatten().collect())
    }

    /// Builds a codebook from row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not form whole points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite cluster coordinate".into()));
        }
        Ok(Self { dim, coords })
    }

    /// Convenience constructor for one-dimensional codebooks.
    ///
    /// # Panics
    /// If `values` is empty or holds a non-finite value.
    pub fn from_1d(values: &[f64]) -> Self {
        Self::from_flat(1, values.to_vec()).expect("valid one-dimensional codebook")
    }

    /// Convenience constructor for planar codebooks.
    ///
    /// # Panics
    /// If `points` is empty or holds a non-finite value.
    pub fn from_2d(points: &[[f64; 2]]) -> Self {
        Self::from_flat(2, points.iter().flatten().copied().collect())
            .expect("valid planar codebook")
    }

    pub fn k(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Row-major coordinates, `k * d` values.
    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    /// The codebook whose `i`-th cluster is `self.point(perm[i])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.k());
        let coords = perm
            .iter()
            .flat_map(|&p| self.point(p).iter().copied())
            .collect();
        Self {
            dim: self.dim,
            coords,
        }
    }

    /// Squared Euclidean distance in `R^{kd}`, without re-indexing.
    pub fn distance_sq(&self, other: &Self) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Clusters sorted lexicographically; a canonical representative of the
    /// codebook up to relabelling.
    pub fn canonical(&self) -> Self {
        let mut pts = self.to_nested();
        pts.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Self {
            dim: self.dim,
            coords: pts.into_iter().flatten().collect(),
        }
    }

    /// Fails with [`Error::DuplicateClusters`] when two clusters coincide.
    pub fn check_distinct(&self) -> Result<()> {
        for i in 0..self.k() {
            for j in i + 1..self.k() {
                if dist_sq(self.point(i), self.point(j)) == 0.0 {
                    return Err(Error::DuplicateClusters { i, j });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn point2(&self, i: usize) -> [f64; 2] {
        let p = self.point(i);
        [p[0], if self.dim == 2 { p[1] } else { 0.0 }]
    }
}

impl TryFrom<Vec<Vec<f64>>> for ClusterVector {
    type Error = Error;

    fn try_from(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<ClusterVector> for Vec<Vec<f64>> {
    fn from(c: ClusterVector) -> Self {
        c.to_nested()
    }
}

/// `n` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    dim: usize,
    coords: Vec<f64>,
}

impl Sample {
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidInput("ragged sample".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample coordinate".into()));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_1d(values: &[f64]) -> Self {
        Self::from_flat(1, values.to_vec()).expect("finite one-dimensional sample")
    }

    pub fn from_2d(points: &[[f64; 2]]) -> Self {
        Self::from_flat(2, points.iter().flatten().copied().collect())
            .expect("finite planar sample")
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// The first coordinate of every point.
    pub fn project_first(&self) -> Sample {
        Sample {
            dim: 1,
            coords: self.points().map(|p| p[0]).collect(),
        }
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest cluster; ties go to the lowest
/// index. No dimension checks.
pub(crate) fn nearest(c: &ClusterVector, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, p) in c.points().enumerate() {
        let d = dist_sq(p, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Index (from 0) of the cluster nearest to `x`, ties broken to the lowest
/// index.
pub fn assign(c: &ClusterVector, x: &[f64]) -> Result<usize> {
    if x.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite point".into()));
    }
    Ok(nearest(c, x).0)
}

/// Half-planes `{x : |x - c_j| <= |x - c_l|}` for every `l != j` (planar
/// codebooks). Returns `None` when a lower-indexed duplicate of `c_j` makes
/// the cell empty.
pub(crate) fn cell_half_planes(c: &ClusterVector, j: usize) -> Option<Vec<HalfPlane>> {
    let cj = c.point2(j);
    let mut planes = Vec::with_capacity(c.k().saturating_sub(1));
    for l in 0..c.k() {
        if l == j {
            continue;
        }
        let cl = c.point2(l);
        if cl == cj {
            if l < j {
                return None;
            }
            continue;
        }
        planes.push(bisector_half_plane(cj, cl));
    }
    Some(planes)
}

/// `{x : |x - a| <= |x - b|}`.
pub(crate) fn bisector_half_plane(a: [f64; 2], b: [f64; 2]) -> HalfPlane {
    HalfPlane {
        normal: [2.0 * (b[0] - a[0]), 2.0 * (b[1] - a[1])],
        offset: (b[0] * b[0] + b[1] * b[1]) - (a[0] * a[0] + a[1] * a[1]),
    }
}

/// Sub-intervals of the real line owned by each cluster of a 1D codebook:
/// `(cluster index, lo, hi)` in increasing order of position. Duplicated
/// clusters after the first own nothing.
pub(crate) fn line_cells(c: &ClusterVector) -> Vec<(usize, f64, f64)> {
    let mut order: Vec<usize> = (0..c.k()).collect();
    order.sort_by(|&a, &b| c.point(a)[0].total_cmp(&c.point(b)[0]).then(a.cmp(&b)));
    order.dedup_by(|later, first| c.point(*later)[0] == c.point(*first)[0]);
    let mut cells = Vec::with_capacity(order.len());
    for (pos, &j) in order.iter().enumerate() {
        let x = c.point(j)[0];
        let lo = if pos == 0 {
            f64::NEG_INFINITY
        } else {
            0.5 * (c.point(order[pos - 1])[0] + x)
        };
        let hi = if pos + 1 == order.len() {
            f64::INFINITY
        } else {
            0.5 * (x + c.point(order[pos + 1])[0])
        };
        cells.push((j, lo, hi));
    }
    cells
}

/// Geometry of a common face of two Voronoi cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FaceGeometry {
    /// A single point (d = 1).
    Point(f64),
    /// A segment on the bisector (d = 2).
    Segment([f64; 2], [f64; 2]),
}

/// The non-empty common face of cells `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryFace {
    pub i: usize,
    pub j: usize,
    pub geometry: FaceGeometry,
}

impl BoundaryFace {
    /// (d-1)-dimensional Lebesgue measure: 1 for a point, the length of a
    /// segment.
    pub fn measure(&self) -> f64 {
        match self.geometry {
            FaceGeometry::Point(_) => 1.0,
            FaceGeometry::Segment(a, b) => (b[0] - a[0]).hypot(b[1] - a[1]),
        }
    }

    /// The point at parameter `t` in `[0, 1]` (the point itself for d = 1).
    pub fn at(&self, t: f64) -> Vec<f64> {
        match self.geometry {
            FaceGeometry::Point(x) => vec![x],
            FaceGeometry::Segment(a, b) => {
                vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
            }
        }
    }

    /// The part of the face inside a disk; `None` if it is empty or a
    /// single point. Point faces are kept when they lie in the disk's
    /// horizontal extent.
    pub fn clip_to_disk(&self, disk: &Disk) -> Option<BoundaryFace> {
        match self.geometry {
            FaceGeometry::Point(x) => ((x - disk.center[0]).abs() <= disk.radius).then_some(*self),
            FaceGeometry::Segment(a, b) => {
                let dir = [b[0] - a[0], b[1] - a[1]];
                let (t0, t1) = clip_line_to_disk(a, dir, disk)?;
                let (t0, t1) = (t0.max(0.0), t1.min(1.0));
                (t1 > t0).then(|| BoundaryFace {
                    geometry: FaceGeometry::Segment(
                        [a[0] + t0 * dir[0], a[1] + t0 * dir[1]],
                        [a[0] + t1 * dir[0], a[1] + t1 * dir[1]],
                    ),
                    ..*self
                })
            }
        }
    }

    /// Splits a segment face at parameter `t`; point faces are returned
    /// unchanged on both sides.
    pub fn split(&self, t: f64) -> (BoundaryFace, BoundaryFace) {
        match self.geometry {
            FaceGeometry::Point(_) => (*self, *self),
            FaceGeometry::Segment(a, b) => {
                let m = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                (
                    BoundaryFace {
                        geometry: FaceGeometry::Segment(a, m),
                        ..*self
                    },
                    BoundaryFace {
                        geometry: FaceGeometry::Segment(m, b),
                        ..*self
                    },
                )
            }
        }
    }
}

/// Parameter range `t` with `|origin + t dir - center| <= radius`.
fn clip_line_to_disk(origin: [f64; 2], dir: [f64; 2], disk: &Disk) -> Option<(f64, f64)> {
    let o = [origin[0] - disk.center[0], origin[1] - disk.center[1]];
    let a = dir[0] * dir[0] + dir[1] * dir[1];
    let b = o[0] * dir[0] + o[1] * dir[1];
    let c = o[0] * o[0] + o[1] * o[1] - disk.radius * disk.radius;
    let disc = b * b - a * c;
    if a == 0.0 || disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / a, (-b + s) / a))
}

/// The unit disk, the support of every planar source distribution.
pub const UNIT_DISK: Disk = Disk {
    center: [0.0, 0.0],
    radius: 1.0,
};

/// All non-empty common faces of the Voronoi diagram of `c`.
///
/// In one dimension a face is the midpoint of two clusters that are
/// neighbours on the line (faces are not clipped, so unbounded supports
/// are handled). In two dimensions a face is the part of the bisector of
/// `c_i, c_j` that lies in the unit disk and in no other cluster's
/// territory.
pub fn boundary_faces(c: &ClusterVector) -> Result<Vec<BoundaryFace>> {
    c.check_distinct()?;
    let k = c.k();
    let mut faces = Vec::new();
    match c.dim() {
        1 => {
            let cells = line_cells(c);
            for w in cells.windows(2) {
                let (a, b) = (w[0].0, w[1].0);
                faces.push(BoundaryFace {
                    i: a.min(b),
                    j: a.max(b),
                    geometry: FaceGeometry::Point(w[0].2),
                });
            }
            faces.sort_by_key(|f| (f.i, f.j));
        }
        2 => {
            for i in 0..k {
                for j in i + 1..k {
                    if let Some(face) = planar_face(c, i, j) {
                        faces.push(face);
                    }
                }
            }
        }
        d => return Err(Error::UnsupportedDimension(d)),
    }
    Ok(faces)
}

fn planar_face(c: &ClusterVector, i: usize, j: usize) -> Option<BoundaryFace> {
    let (ci, cj) = (c.point2(i), c.point2(j));
    let mid = [0.5 * (ci[0] + cj[0]), 0.5 * (ci[1] + cj[1])];
    let n = [cj[0] - ci[0], cj[1] - ci[1]];
    let len = n[0].hypot(n[1]);
    let dir = [-n[1] / len, n[0] / len];
    let (mut t0, mut t1) = clip_line_to_disk(mid, dir, &UNIT_DISK)?;
    for l in 0..c.k() {
        if l == i || l == j {
            continue;
        }
        // Points of the bisector at least as close to c_i as to c_l.
        let hp = bisector_half_plane(ci, c.point2(l));
        let slope = hp.normal[0] * dir[0] + hp.normal[1] * dir[1];
        let rest = hp.offset - (hp.normal[0] * mid[0] + hp.normal[1] * mid[1]);
        if slope.abs() <= 1e-15 * (hp.normal[0].abs() + hp.normal[1].abs()) {
            if rest < 0.0 {
                return None;
            }
        } else if slope > 0.0 {
            t1 = t1.min(rest / slope);
        } else {
            t0 = t0.max(rest / slope);
        }
        if t1 <= t0 {
            return None;
        }
    }
    (t1 - t0 > 1e-14).then(|| BoundaryFace {
        i,
        j,
        geometry: FaceGeometry::Segment(
            [mid[0] + t0 * dir[0], mid[1] + t0 * dir[1]],
            [mid[0] + t1 * dir[0], mid[1] + t1 * dir[1]],
        ),
    })
}

/// Integral of `g` over a face with respect to the (d-1)-dimensional
/// Lebesgue measure: point evaluation in d = 1, panelled Gauss–Legendre
/// along the segment in d = 2.
pub fn surface_integral<const N: usize, G>(face: &BoundaryFace, g: G) -> Result<[f64; N]>
where
    G: Fn(&[f64]) -> [f64; N],
{
    match face.geometry {
        FaceGeometry::Point(x) => {
            let v = g(&[x]);
            if v.iter().any(|y| !y.is_finite()) {
                return Err(Error::NonFiniteIntegrand(vec![x]));
            }
            Ok(v)
        }
        FaceGeometry::Segment(..) => {
            let bad = std::cell::RefCell::new(None);
            let len = face.measure();
            let est = panel_legendre(
                |t| {
                    let p = face.at(t);
                    let v = g(&p);
                    if v.iter().any(|y| !y.is_finite()) {
                        bad.borrow_mut().get_or_insert(p);
                        return [0.0; N];
                    }
                    v
                },
                FACE_RULE_ORDER,
                SURFACE_TOL,
            );
            if let Some(p) = bad.into_inner() {
                return Err(Error::NonFiniteIntegrand(p));
            }
            if !est.converged {
                return Err(Error::QuadratureFailure(format!(
                    "face ({}, {}) integral, error {:e}",
                    face.i, face.j, est.error
                )));
            }
            Ok(est.value.map(|v| v * len))
        }
    }
}

/// Probability of the Voronoi cell of cluster `i`.
pub fn cell_mass(c: &ClusterVector, i: usize, dist: &SourceDistribution) -> Result<f64> {
    if i >= c.k() {
        return Err(Error::InvalidInput(format!(
            "cell index {i} out of range for k = {}",
            c.k()
        )));
    }
    Ok(dist.cell_moments(c)?[i].mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn assign_examples() {
        let c = ClusterVector::from_1d(&[0.0, 1.0]);
        assert_eq!(assign(&c, &[0.4]).unwrap(), 0);
        assert_eq!(assign(&c, &[0.5]).unwrap(), 0);
        let c = ClusterVector::from_2d(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        // squared distances 0.6625, 0.4625, 0.5625
        assert_eq!(assign(&c, &[0.6, 0.55]).unwrap(), 1);
        assert!(matches!(
            assign(&c, &[0.6]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn constructors_validate() {
        assert!(matches!(
            ClusterVector::new(vec![vec![0.0, 1.0], vec![1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            ClusterVector::new(vec![vec![0.0; 3]]),
            Err(Error::UnsupportedDimension(3))
        ));
        assert!(ClusterVector::new(vec![]).is_err());
        assert!(ClusterVector::from_flat(1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn faces_in_one_dimension() {
        let faces = boundary_faces(&ClusterVector::from_1d(&[0.25, 0.75])).unwrap();
        assert_eq!(faces.len(), 1);
        assert_eq!(faces[0].geometry, FaceGeometry::Point(0.5));
        assert_eq!(faces[0].measure(), 1.0);

        let faces = boundary_faces(&ClusterVector::from_1d(&[0.0, 0.4, 0.8])).unwrap();
        let pts: Vec<_> = faces.iter().map(|f| (f.i, f.j, f.geometry)).collect();
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[0].0, pts[0].1), (0, 1));
        assert!(matches!(pts[0].2, FaceGeometry::Point(x) if (x - 0.2).abs() < 1e-15));
        assert!(matches!(pts[1].2, FaceGeometry::Point(x) if (x - 0.6).abs() < 1e-15));
        assert!(!faces.iter().any(|f| f.i == 0 && f.j == 2));
    }

    #[test]
    fn faces_unsorted_input_keep_indices() {
        let faces = boundary_faces(&ClusterVector::from_1d(&[0.8, 0.0, 0.4])).unwrap();
        let pairs: Vec<_> = faces.iter().map(|f| (f.i, f.j)).collect();
        assert_eq!(pairs, vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn planar_face_is_a_diameter() {
        let faces = boundary_faces(&ClusterVector::from_2d(&[[-0.5, 0.0], [0.5, 0.0]])).unwrap();
        assert_eq!(faces.len(), 1);
        assert!((faces[0].measure() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn duplicates_are_rejected() {
        let c = ClusterVector::from_1d(&[0.3, 0.3]);
        assert_eq!(
            boundary_faces(&c),
            Err(Error::DuplicateClusters { i: 0, j: 1 })
        );
    }

    #[test]
    fn surface_integral_examples() {
        let point = BoundaryFace {
            i: 0,
            j: 1,
            geometry: FaceGeometry::Point(0.5),
        };
        assert_eq!(surface_integral(&point, |x| [x[0] * x[0]]).unwrap(), [0.25]);
        let seg = BoundaryFace {
            i: 0,
            j: 1,
            geometry: FaceGeometry::Segment([0.0, -1.0], [0.0, 1.0]),
        };
        let [len] = surface_integral(&seg, |_| [1.0]).unwrap();
        assert!((len - 2.0).abs() < 1e-14);
        let [m2] = surface_integral(&seg, |p| [p[1] * p[1]]).unwrap();
        assert!((m2 - 2.0 / 3.0).abs() < 1e-14);
        assert!(matches!(
            surface_integral(&point, |_| [f64::NAN]),
            Err(Error::NonFiniteIntegrand(_))
        ));
    }

    fn arb_codebook() -> impl Strategy<Value = ClusterVector> {
        prop::collection::vec((-0.9f64..0.9, -0.9f64..0.9), 2..7)
            .prop_map(|pts| {
                ClusterVector::from_2d(&pts.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>())
            })
            .prop_filter("distinct clusters", |c| {
                (0..c.k()).all(|i| (i + 1..c.k()).all(|j| dist_sq(c.point(i), c.point(j)) > 1e-6))
            })
    }

    proptest! {
        #[test]
        fn face_points_are_equidistant_and_nearest(c in arb_codebook()) {
            for face in boundary_faces(&c).unwrap() {
                for s in 0..=20 {
                    let p = face.at(s as f64 / 20.0);
                    prop_assert!(p[0].hypot(p[1]) <= 1.0 + 1e-12);
                    let di = dist_sq(&p, c.point(face.i)).sqrt();
                    let dj = dist_sq(&p, c.point(face.j)).sqrt();
                    prop_assert!((di - dj).abs() <= FACE_SLACK);
                    for l in 0..c.k() {
                        prop_assert!(dist_sq(&p, c.point(l)).sqrt() >= di - FACE_SLACK);
                    }
                }
            }
        }

        #[test]
        fn assign_ignores_far_duplicates(
            c in arb_codebook(),
            x in -1.0f64..1.0,
            y in -1.0f64..1.0,
        ) {
            let p = [x, y];
            let (best, _) = nearest(&c, &p);
            // Duplicate the cluster farthest from p.
            let far = (0..c.k())
                .max_by(|&a, &b| dist_sq(c.point(a), &p).total_cmp(&dist_sq(c.point(b), &p)))
                .unwrap();
            prop_assume!(far != best);
            let mut pts = c.to_nested();
            pts.push(pts[far].clone());
            let extended = ClusterVector::new(pts).unwrap();
            prop_assert_eq!(assign(&extended, &p).unwrap(), best);
        }

        #[test]
        fn surface_integral_is_additive(
            c in arb_codebook(),
            t in 0.05f64..0.95,
        ) {
            let g = |p: &[f64]| [(3.0 * p[0]).sin() + p[1] * p[1], p[0] * p[1]];
            for face in boundary_faces(&c).unwrap() {
                let whole = surface_integral(&face, g).unwrap();
                let (a, b) = face.split(t);
                let left = surface_integral(&a, g).unwrap();
                let right = surface_integral(&b, g).unwrap();
                for m in 0..2 {
                    prop_assert!((whole[m] - left[m] - right[m]).abs() < 1e-11);
                }
            }
        }
    }
}
