//! Numerical integration: adaptive Gauss–Kronrod on intervals, panelled
//! Gauss–Legendre on segments, and nested integration over the intersection
//! of a disk with half-planes.
//!
//! Integrands are vector valued (`[f64; N]`) so that masses, first moments
//! and distortions of a cell are collected in a single pass.

use std::cell::Cell;
use std::f64::consts::FRAC_PI_2;

/// Absolute and relative error targets. A result is accepted when the
/// estimated error is below `max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    fn target(&self, magnitude: f64) -> f64 {
        self.abs.max(self.rel * magnitude)
    }
}

/// An integral estimate together with its error bound.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: f64,
    pub converged: bool,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// 7-point Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 4000;

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn gk15<const N: usize, F: FnMut(f64) -> [f64; N]>(f: &mut F, a: f64, b: f64) -> ([f64; N], f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let mut res_abs = [0.0; N];
    let mut fv1 = [[0.0; N]; 7];
    let mut fv2 = [[0.0; N]; 7];
    for c in 0..N {
        kron[c] = fc[c] * WGK[7];
        gauss[c] = fc[c] * WG[3];
        res_abs[c] = kron[c].abs();
    }
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        for c in 0..N {
            kron[c] += WGK[j] * (f1[c] + f2[c]);
            res_abs[c] += WGK[j] * (f1[c].abs() + f2[c].abs());
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * (f1[c] + f2[c]);
            }
        }
        fv1[j] = f1;
        fv2[j] = f2;
    }
    let mut value = [0.0; N];
    let mut err = 0.0f64;
    for c in 0..N {
        let mean = 0.5 * kron[c];
        let mut res_asc = WGK[7] * (fc[c] - mean).abs();
        for j in 0..7 {
            res_asc += WGK[j] * ((fv1[j][c] - mean).abs() + (fv2[j][c] - mean).abs());
        }
        let e = rescale_error(
            (kron[c] - gauss[c]) * half,
            res_abs[c] * half.abs(),
            res_asc * half.abs(),
        );
        err = err.max(e);
        value[c] = kron[c] * half;
    }
    (value, err)
}

fn norm_inf<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Globally adaptive 15-point Gauss–Kronrod integration of `f` over
/// `[a, b]`, with the interval initially split at every breakpoint that
/// falls strictly inside it.
pub fn gauss_kronrod<const N: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Estimate<N>
where
    F: FnMut(f64) -> [f64; N],
{
    if !(b > a) {
        return Estimate {
            value: [0.0; N],
            error: 0.0,
            converged: true,
        };
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (b - a));

    // (lo, hi, value, error)
    let mut intervals: Vec<(f64, f64, [f64; N], f64)> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();

    let min_width = 1e-14 * (b - a).max(1e-300);
    let mut converged = false;
    loop {
        let mut total = [0.0; N];
        let mut total_err = 0.0;
        for iv in &intervals {
            for c in 0..N {
                total[c] += iv.2[c];
            }
            total_err += iv.3;
        }
        if total_err <= tol.target(norm_inf(&total)) {
            converged = true;
        }
        if converged || intervals.len() >= MAX_INTERVALS {
            return Estimate {
                value: total,
                error: total_err,
                converged,
            };
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .filter(|(_, iv)| iv.1 - iv.0 > min_width)
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap_or((usize::MAX, &intervals[0]));
        if idx == usize::MAX {
            return Estimate {
                value: total,
                error: total_err,
                converged: false,
            };
        }
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // p1 = P_n(z), p2 = P_{n-1}(z)
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order Gauss–Legendre over `[0, 1]` split into equal panels; the
/// panel count doubles until two successive refinements agree.
pub fn panel_legendre<const N: usize, F>(f: F, order: usize, tol: Tolerance) -> Estimate<N>
where
    F: Fn(f64) -> [f64; N],
{
    let (nodes, weights) = gauss_legendre(order);
    let rule = |panels: usize| {
        let h = 1.0 / panels as f64;
        let mut acc = [0.0; N];
        for p in 0..panels {
            let lo = p as f64 * h;
            for (x, w) in nodes.iter().zip(&weights) {
                let v = f(lo + 0.5 * h * (x + 1.0));
                for c in 0..N {
                    acc[c] += 0.5 * h * w * v[c];
                }
            }
        }
        acc
    };
    let mut panels = 1;
    let mut prev = rule(panels);
    loop {
        panels *= 2;
        let next = rule(panels);
        let diff = prev
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if diff <= tol.target(norm_inf(&next)) {
            return Estimate {
                value: next,
                error: diff,
                converged: true,
            };
        }
        if panels >= 1 << 14 {
            return Estimate {
                value: next,
                error: diff,
                converged: false,
            };
        }
        prev = next;
    }
}

/// The closed half-plane `normal · x <= offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl HalfPlane {
    pub fn contains(&self, p: [f64; 2], slack: f64) -> bool {
        self.normal[0] * p[0] + self.normal[1] * p[1] <= self.offset + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

/// A disk intersected with finitely many half-planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexRegion {
    pub disk: Disk,
    pub planes: Vec<HalfPlane>,
}

impl ConvexRegion {
    fn is_vertical(plane: &HalfPlane) -> bool {
        plane.normal[1].abs() <= 1e-14 * (plane.normal[0].abs() + plane.normal[1].abs())
    }

    /// The vertical chord of the region at abscissa `x`.
    pub fn y_range(&self, x: f64) -> Option<(f64, f64)> {
        let Disk { center, radius } = self.disk;
        let dx = x - center[0];
        let s = (radius * radius - dx * dx).max(0.0).sqrt();
        let mut lo = center[1] - s;
        let mut hi = center[1] + s;
        for p in &self.planes {
            let rest = p.offset - p.normal[0] * x;
            if Self::is_vertical(p) {
                if rest < 0.0 {
                    return None;
                }
            } else if p.normal[1] > 0.0 {
                hi = hi.min(rest / p.normal[1]);
            } else {
                lo = lo.max(rest / p.normal[1]);
            }
        }
        (hi > lo).then_some((lo, hi))
    }

    /// Abscissae where the chord length may fail to be smooth.
    fn x_breakpoints(&self) -> Vec<f64> {
        let Disk { center, radius } = self.disk;
        let mut xs = Vec::new();
        for (idx, p) in self.planes.iter().enumerate() {
            let norm = p.normal[0].hypot(p.normal[1]);
            if norm == 0.0 {
                continue;
            }
            if Self::is_vertical(p) {
                xs.push(p.offset / p.normal[0]);
            }
            let t = (p.offset - p.normal[0] * center[0] - p.normal[1] * center[1]) / norm;
            if t.abs() <= radius {
                let foot = [
                    center[0] + t * p.normal[0] / norm,
                    center[1] + t * p.normal[1] / norm,
                ];
                let h = (radius * radius - t * t).max(0.0).sqrt();
                let dir_x = -p.normal[1] / norm;
                xs.push(foot[0] + h * dir_x);
                xs.push(foot[0] - h * dir_x);
            }
            for q in &self.planes[idx + 1..] {
                let det = p.normal[0] * q.normal[1] - p.normal[1] * q.normal[0];
                if det.abs() > 1e-14 * norm * q.normal[0].hypot(q.normal[1]) {
                    xs.push((p.offset * q.normal[1] - q.offset * p.normal[1]) / det);
                }
            }
        }
        xs
    }
}

const HINT_MULTIPLES: [f64; 9] = [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0];

/// Integrates `f(x, y)` over a convex region.
///
/// The outer variable is the abscissa, reparametrised as
/// `x = cx + r sin(theta)` so that the square-root behaviour of the chord
/// at the left and right ends of the disk disappears. `hints` lists
/// `(location, scale)` pairs around which the integrand varies quickly
/// (a Gaussian mean and its standard deviation, for instance); extra
/// breakpoints are placed at a few multiples of the scale.
pub fn integrate_region<const N: usize, F>(
    region: &ConvexRegion,
    f: F,
    hints: &[([f64; 2], f64)],
    tol: Tolerance,
) -> Estimate<N>
where
    F: Fn(f64, f64) -> [f64; N],
{
    let Disk { center, radius } = region.disk;
    if radius <= 0.0 {
        return Estimate {
            value: [0.0; N],
            error: 0.0,
            converged: true,
        };
    }
    let mut xs = region.x_breakpoints();
    let mut ys = Vec::new();
    for (loc, scale) in hints {
        for m in HINT_MULTIPLES {
            xs.push(loc[0] + m * scale);
            ys.push(loc[1] + m * scale);
        }
    }
    let thetas: Vec<f64> = xs
        .iter()
        .filter(|x| x.is_finite())
        .map(|x| ((x - center[0]) / radius).clamp(-1.0, 1.0).asin())
        .collect();

    let inner_tol = Tolerance::new(tol.abs * 0.1, tol.rel * 0.1);
    let inner_ok = Cell::new(true);
    let outer = gauss_kronrod(
        |theta: f64| {
            let x = center[0] + radius * theta.sin();
            let jac = radius * theta.cos();
            match region.y_range(x) {
                None => [0.0; N],
                Some((lo, hi)) => {
                    let est = gauss_kronrod(|y| f(x, y), lo, hi, &ys, inner_tol);
                    if !est.converged {
                        inner_ok.set(false);
                    }
                    let mut v = est.value;
                    for c in v.iter_mut() {
                        *c *= jac;
                    }
                    v
                }
            }
        },
        -FRAC_PI_2,
        FRAC_PI_2,
        &thetas,
        tol,
    );
    Estimate {
        converged: outer.converged && inner_ok.get(),
        ..outer
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TIGHT: Tolerance = Tolerance::new(1e-13, 1e-12);

    #[test]
    fn kronrod_polynomial_and_exponential() {
        let est = gauss_kronrod(|x| [x * x, x.exp()], 0.0, 2.0, &[], TIGHT);
        assert!(est.converged);
        assert!((est.value[0] - 8.0 / 3.0).abs() < 1e-13);
        assert!((est.value[1] - (2f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn kronrod_kink_with_breakpoint() {
        let est = gauss_kronrod(|x: f64| [x.abs()], -1.0, 3.0, &[0.0], TIGHT);
        assert!((est.value[0] - 5.0).abs() < 1e-13);
    }

    #[test]
    fn kronrod_sqrt_singularity_converges() {
        let est = gauss_kronrod(|x: f64| [x.sqrt()], 0.0, 1.0, &[], TIGHT);
        assert!(est.converged);
        assert!((est.value[0] - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn legendre_rules_integrate_polynomials_exactly() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 {
                    0.0
                } else {
                    2.0 / (p as f64 + 1.0)
                };
                assert!((approx - exact).abs() < 1e-13, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn panels_on_unit_interval() {
        let est = panel_legendre(|t| [t.sin()], 8, TIGHT);
        assert!((est.value[0] - (1.0 - 1f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn disk_area_and_second_moment() {
        let region = ConvexRegion {
            disk: Disk {
                center: [0.2, -0.1],
                radius: 0.5,
            },
            planes: vec![],
        };
        let est = integrate_region(
            &region,
            |x, y| [1.0, (x - 0.2).powi(2) + (y + 0.1).powi(2)],
            &[],
            TIGHT,
        );
        assert!(est.converged);
        assert!((est.value[0] - PI * 0.25).abs() < 1e-12);
        assert!((est.value[1] - PI * 0.5f64.powi(4) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn half_disk_and_wedge() {
        let unit = Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        };
        let half = ConvexRegion {
            disk: unit,
            planes: vec![HalfPlane {
                normal: [1.0, 0.0],
                offset: 0.0,
            }],
        };
        let est = integrate_region(&half, |_, _| [1.0], &[], TIGHT);
        assert!((est.value[0] - PI / 2.0).abs() < 1e-12);

        // Quarter disk y >= x, y >= -x.
        let wedge = ConvexRegion {
            disk: unit,
            planes: vec![
                HalfPlane {
                    normal: [1.0, -1.0],
                    offset: 0.0,
                },
                HalfPlane {
                    normal: [-1.0, -1.0],
                    offset: 0.0,
                },
            ],
        };
        let est = integrate_region(&wedge, |_, y| [1.0, y], &[], TIGHT);
        assert!((est.value[0] - PI / 4.0).abs() < 1e-12);
        // centroid of a quarter disk along its axis: 4 sqrt(2) / (3 pi)
        let centroid = est.value[1] / est.value[0];
        assert!((centroid - 4.0 * 2f64.sqrt() / (3.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn peaked_gaussian_with_hint() {
        let sigma = 0.01;
        let m = [0.5, 0.1];
        let region = ConvexRegion {
            disk: Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            planes: vec![],
        };
        let g = |x: f64, y: f64| {
            let r2 = (x - m[0]).powi(2) + (y - m[1]).powi(2);
            [(-r2 / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)]
        };
        let est = integrate_region(&region, g, &[(m, sigma)], TIGHT);
        assert!(est.converged);
        assert!((est.value[0] - 1.0).abs() < 1e-11, "{}", est.value[0]);
    }
}
