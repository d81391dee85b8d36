//! Contrast, distortion, excess loss and the optimal set.

use crate::config::CERTIFY_RISK_TOL;
use crate::distributions::SourceDistribution;
use crate::geometry::{dist_sq, nearest, ClusterVector, Sample};
use crate::{Error, Result};

/// Above this many clusters, alignment is greedy instead of exhaustive.
const EXHAUSTIVE_ALIGN_MAX_K: usize = 8;

fn check_point(c: &ClusterVector, x: &[f64]) -> Result<()> {
    if x.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `gamma(c, x) = min_j |x - c_j|^2`.
pub fn contrast(c: &ClusterVector, x: &[f64]) -> Result<f64> {
    check_point(c, x)?;
    Ok(nearest(c, x).1)
}

/// Mean contrast over a sample.
pub fn empirical_risk(c: &ClusterVector, sample: &Sample) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: sample.dim(),
        });
    }
    Ok(sample.points().map(|x| nearest(c, x).1).sum::<f64>() / sample.len() as f64)
}

/// Population distortion `R(c) = E gamma(c, X)`.
pub fn true_risk(c: &ClusterVector, dist: &SourceDistribution) -> Result<f64> {
    Ok(dist.cell_moments(c)?.iter().map(|m| m.distortion).sum())
}

/// `Delta(c, x)`: block `j` is `-2 (x - c_j)` when `x` falls in cell `j`,
/// zero otherwise. Length `k d`.
pub fn gradient(c: &ClusterVector, x: &[f64]) -> Result<Vec<f64>> {
    check_point(c, x)?;
    let d = c.dim();
    let (j, _) = nearest(c, x);
    let mut g = vec![0.0; c.k() * d];
    for (t, (xi, ci)) in x.iter().zip(c.point(j)).enumerate() {
        g[j * d + t] = -2.0 * (xi - ci);
    }
    Ok(g)
}

/// `P Delta(c, .)`, which is also the gradient of `R` at `c`.
pub fn expected_gradient(c: &ClusterVector, dist: &SourceDistribution) -> Result<Vec<f64>> {
    let d = c.dim();
    Ok(dist
        .cell_moments(c)?
        .iter()
        .flat_map(|m| (0..d).map(move |t| -2.0 * m.offset[t]))
        .collect())
}

/// The set of optimal codebooks and their common risk.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSet {
    members: Vec<ClusterVector>,
    risk: f64,
}

impl OptimalSet {
    /// Builds the set from codebooks, computing every member's risk and
    /// failing when they differ by more than the certification tolerance.
    pub fn new(members: Vec<ClusterVector>, dist: &SourceDistribution) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidInput("the optimal set is empty".into()))?;
        let (k, d) = (first.k(), first.dim());
        if members.iter().any(|m| m.k() != k || m.dim() != d) {
            return Err(Error::InvalidInput(
                "optimal codebooks of different shapes".into(),
            ));
        }
        let risks = members
            .iter()
            .map(|m| true_risk(m, dist))
            .collect::<Result<Vec<_>>>()?;
        let lo = risks.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > CERTIFY_RISK_TOL {
            return Err(Error::CertificationFailed(format!(
                "members of the optimal set have risks {lo} and {hi}"
            )));
        }
        Ok(Self { members, risk: lo })
    }

    /// Builds the set from codebooks and a known optimal risk.
    pub fn with_risk(members: Vec<ClusterVector>, risk: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidInput("the optimal set is empty".into()));
        }
        Ok(Self { members, risk })
    }

    pub fn members(&self) -> &[ClusterVector] {
        &self.members
    }

    /// `R*`.
    pub fn risk(&self) -> f64 {
        self.risk
    }

    pub fn k(&self) -> usize {
        self.members[0].k()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }
}

/// Excess distortion `R(c) - R*`.
pub fn loss(c: &ClusterVector, opt: &OptimalSet, dist: &SourceDistribution) -> Result<f64> {
    Ok(true_risk(c, dist)? - opt.risk)
}

/// `perm` minimising `sum_i |a_i - b_{perm[i]}|^2`.
pub(crate) fn best_alignment(a: &ClusterVector, b: &ClusterVector) -> (Vec<usize>, f64) {
    let k = a.k();
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| dist_sq(a.point(i), b.point(j))).collect())
        .collect();
    if k <= EXHAUSTIVE_ALIGN_MAX_K {
        let mut best = (Vec::new(), f64::INFINITY);
        let mut perm = Vec::with_capacity(k);
        let mut used = vec![false; k];
        search(&cost, &mut perm, &mut used, 0.0, &mut best);
        best
    } else {
        let mut used = vec![false; k];
        let mut perm = Vec::with_capacity(k);
        let mut total = 0.0;
        for row in &cost {
            let j = (0..k)
                .filter(|&j| !used[j])
                .min_by(|&x, &y| row[x].total_cmp(&row[y]))
                .expect("a free column remains");
            used[j] = true;
            perm.push(j);
            total += row[j];
        }
        (perm, total)
    }
}

fn search(
    cost: &[Vec<f64>],
    perm: &mut Vec<usize>,
    used: &mut [bool],
    partial: f64,
    best: &mut (Vec<usize>, f64),
) {
    let i = perm.len();
    if i == cost.len() {
        if partial < best.1 {
            *best = (perm.clone(), partial);
        }
        return;
    }
    for j in 0..cost.len() {
        if used[j] || partial + cost[i][j] >= best.1 {
            continue;
        }
        used[j] = true;
        perm.push(j);
        search(cost, perm, used, partial + cost[i][j], best);
        perm.pop();
        used[j] = false;
    }
}

/// `c*(c)`: the member of the optimal set closest to `c` after relabelling,
/// returned with its clusters reordered to match `c`, together with the
/// squared distance. Ties go to the first member.
pub fn nearest_optimal(c: &ClusterVector, opt: &OptimalSet) -> Result<(ClusterVector, f64)> {
    if c.k() != opt.k() || c.dim() != opt.dim() {
        return Err(Error::DimensionMismatch {
            expected: opt.k() * opt.dim(),
            got: c.k() * c.dim(),
        });
    }
    let mut best: Option<(ClusterVector, f64)> = None;
    for m in &opt.members {
        let (perm, d2) = best_alignment(c, m);
        if best.as_ref().is_none_or(|b| d2 < b.1) {
            best = Some((m.permuted(&perm), d2));
        }
    }
    Ok(best.expect("optimal set is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform() -> SourceDistribution {
        SourceDistribution::uniform_unit_interval()
    }

    #[test]
    fn contrast_examples() {
        let c = ClusterVector::from_1d(&[0.0, 1.0]);
        assert!((contrast(&c, &[0.4]).unwrap() - 0.16).abs() < 1e-16);
        assert_eq!(contrast(&c, &[1.0]).unwrap(), 0.0);
        let c = ClusterVector::from_2d(&[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(contrast(&c, &[0.5, 0.5]).unwrap(), 0.5);
        assert!(contrast(&c, &[0.5]).is_err());
    }

    #[test]
    fn empirical_risk_examples() {
        let s = Sample::from_1d(&[0.0, 1.0, 4.0, 5.0]);
        let c = ClusterVector::from_1d(&[0.5, 4.5]);
        assert_eq!(empirical_risk(&c, &s).unwrap(), 0.25);
        let c = ClusterVector::from_1d(&[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(empirical_risk(&c, &s).unwrap(), 0.0);
        let c = ClusterVector::from_1d(&[2.5]);
        assert_eq!(empirical_risk(&c, &s).unwrap(), (6.25 + 2.25) / 2.0);
        assert_eq!(
            empirical_risk(&c, &Sample::from_1d(&[])),
            Err(Error::EmptySample)
        );
    }

    #[test]
    fn true_risk_examples() {
        let u = uniform();
        let r = true_risk(&ClusterVector::from_1d(&[0.5]), &u).unwrap();
        assert!((r - 1.0 / 12.0).abs() < 1e-16);
        let r = true_risk(&ClusterVector::from_1d(&[0.25, 0.75]), &u).unwrap();
        assert!((r - 1.0 / 48.0).abs() < 1e-16);

        let rho = 0.05;
        let d =
            SourceDistribution::ball_mixture(vec![vec![-0.5, 0.0], vec![0.5, 0.0]], rho).unwrap();
        let r = true_risk(&ClusterVector::from_2d(&[[-0.5, 0.0], [0.5, 0.0]]), &d).unwrap();
        assert!((r - rho * rho * 2.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn planar_risk_by_quadrature_matches_closed_form() {
        // Each ball lies inside one cell: closed form.
        let rho = 0.1;
        let d =
            SourceDistribution::ball_mixture(vec![vec![-0.5, 0.0], vec![0.5, 0.0]], rho).unwrap();
        let c = ClusterVector::from_2d(&[[-0.45, 0.03], [0.05, 0.02]]);
        let r = true_risk(&c, &d).unwrap();
        let expected = 0.5 * (0.05f64.powi(2) + 0.03f64.powi(2))
            + 0.5 * (0.45f64.powi(2) + 0.02f64.powi(2))
            + rho * rho / 2.0;
        assert!((r - expected).abs() < 1e-14);
        // The bisector x = 0.5 halves the second ball: nested quadrature.
        let c = ClusterVector::from_2d(&[[0.4, 0.0], [0.6, 0.0]]);
        let r = true_risk(&c, &d).unwrap();
        let half = {
            // E|x - c|^2 over a half disk whose centroid sits 4 rho/(3 pi)
            // from the cut, against a cluster 0.1 past the cut.
            let m = 4.0 * rho / (3.0 * std::f64::consts::PI);
            rho * rho / 2.0 - 2.0 * 0.1 * m + 0.01
        };
        let expected = 0.5 * (0.81 + rho * rho / 2.0) + 0.5 * half;
        assert!((r - expected).abs() < 1e-12, "{r} vs {expected}");
    }

    #[test]
    fn gradient_examples() {
        let c = ClusterVector::from_1d(&[0.0, 1.0]);
        assert_eq!(gradient(&c, &[0.4]).unwrap(), vec![-0.8, 0.0]);
        assert_eq!(gradient(&c, &[1.0]).unwrap(), vec![0.0, 0.0]);
        let d =
            SourceDistribution::ball_mixture(vec![vec![-0.5, 0.0], vec![0.5, 0.0]], 0.05).unwrap();
        let g = expected_gradient(&ClusterVector::from_2d(&[[-0.5, 0.0], [0.5, 0.0]]), &d).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn expected_gradient_matches_risk_differences() {
        let dists = [
            (
                SourceDistribution::quasi_gaussian(
                    vec![[-0.4, 0.1], [0.4, 0.0]],
                    vec![0.4, 0.6],
                    0.25,
                )
                .unwrap(),
                ClusterVector::from_2d(&[[-0.3, 0.2], [0.5, -0.1]]),
            ),
            (
                SourceDistribution::tail_counterexample(2.0, 10.0).unwrap(),
                ClusterVector::from_1d(&[1.5, 10.0, 23.0]),
            ),
            (uniform(), ClusterVector::from_1d(&[0.3, 0.75])),
        ];
        let h = 1e-5;
        for (dist, c) in &dists {
            let g = expected_gradient(c, dist).unwrap();
            for (t, gt) in g.iter().enumerate() {
                let mut plus = c.as_flat().to_vec();
                let mut minus = plus.clone();
                plus[t] += h;
                minus[t] -= h;
                let rp =
                    true_risk(&ClusterVector::from_flat(c.dim(), plus).unwrap(), dist).unwrap();
                let rm =
                    true_risk(&ClusterVector::from_flat(c.dim(), minus).unwrap(), dist).unwrap();
                let fd = (rp - rm) / (2.0 * h);
                assert!((fd - gt).abs() < 1e-4, "coordinate {t}: {fd} vs {gt}");
            }
        }
    }

    #[test]
    fn loss_examples() {
        let u = uniform();
        let opt = OptimalSet::new(vec![ClusterVector::from_1d(&[0.25, 0.75])], &u).unwrap();
        assert_eq!(
            loss(&ClusterVector::from_1d(&[0.25, 0.75]), &opt, &u).unwrap(),
            0.0
        );
        // Cells [0, 0.525] and [0.525, 1].
        let c = ClusterVector::from_1d(&[0.3, 0.75]);
        let exact = ((0.525f64 - 0.3).powi(3) + 0.3f64.powi(3)) / 3.0
            + (0.225f64.powi(3) + 0.25f64.powi(3)) / 3.0;
        let l = loss(&c, &opt, &u).unwrap();
        assert!(
            (l - (exact - 1.0 / 48.0)).abs() < 1e-14,
            "{l} {}",
            exact - 1.0 / 48.0
        );
        assert!(l > 0.0);
    }

    #[test]
    fn alignment_example() {
        let u = uniform();
        let opt = OptimalSet::new(vec![ClusterVector::from_1d(&[0.25, 0.75])], &u).unwrap();
        let (m, d2) = nearest_optimal(&ClusterVector::from_1d(&[0.9, 0.1]), &opt).unwrap();
        assert_eq!(m, ClusterVector::from_1d(&[0.75, 0.25]));
        assert!((d2 - 0.045).abs() < 1e-15);
        let (m, d2) = nearest_optimal(&ClusterVector::from_1d(&[0.25, 0.75]), &opt).unwrap();
        assert_eq!((m, d2), (ClusterVector::from_1d(&[0.25, 0.75]), 0.0));
    }

    #[test]
    fn unequal_member_risks_are_rejected() {
        let u = uniform();
        let members = vec![
            ClusterVector::from_1d(&[0.25, 0.75]),
            ClusterVector::from_1d(&[0.2, 0.7]),
        ];
        assert!(matches!(
            OptimalSet::new(members, &u),
            Err(Error::CertificationFailed(_))
        ));
    }

    #[test]
    fn sample_risk_tracks_true_risk() {
        let d = SourceDistribution::ball_mixture(
            vec![vec![0.3, 0.3], vec![-0.4, 0.1], vec![0.0, -0.6]],
            0.1,
        )
        .unwrap();
        let c = ClusterVector::from_2d(&[[0.2, 0.2], [-0.3, 0.0], [0.1, -0.5]]);
        let r = true_risk(&c, &d).unwrap();
        let n = 100_000;
        let s = d.sample(3, n).unwrap();
        let vals: Vec<f64> = s.points().map(|x| contrast(&c, x).unwrap()).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        assert!((mean - r).abs() <= 4.0 * sd / (n as f64).sqrt());
    }

    fn greedy_is_exhaustive_for_identity() -> bool {
        let pts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let a = ClusterVector::from_1d(&pts);
        let (perm, d2) = best_alignment(&a, &a);
        perm == (0..10).collect::<Vec<_>>() && d2 == 0.0
    }

    #[test]
    fn greedy_alignment_beyond_eight_clusters() {
        assert!(greedy_is_exhaustive_for_identity());
    }

    proptest! {
        #[test]
        fn risk_is_permutation_invariant(
            pts in prop::collection::vec((-0.9f64..0.9, -0.9f64..0.9), 3),
            rot in 0usize..3,
        ) {
            let d = SourceDistribution::quasi_gaussian(vec![[-0.4, 0.0], [0.4, 0.1]], vec![0.5, 0.5], 0.2).unwrap();
            let c = ClusterVector::from_2d(&pts.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>());
            let perm: Vec<usize> = (0..3).map(|i| (i + rot) % 3).collect();
            let a = true_risk(&c, &d).unwrap();
            let b = true_risk(&c.permuted(&perm), &d).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn loss_is_non_negative(a in -0.5f64..1.5, b in -0.5f64..1.5) {
            let u = uniform();
            let opt = OptimalSet::new(vec![ClusterVector::from_1d(&[0.25, 0.75])], &u).unwrap();
            prop_assert!(loss(&ClusterVector::from_1d(&[a, b]), &opt, &u).unwrap() >= -1e-6);
        }

        #[test]
        fn exhaustive_alignment_beats_every_permutation(
            xs in prop::collection::vec(-1.0f64..1.0, 4),
            ys in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let a = ClusterVector::from_1d(&xs);
            let b = ClusterVector::from_1d(&ys);
            let (_, best) = best_alignment(&a, &b);
            let mut idx = [0usize, 1, 2, 3];
            // all 24 permutations by brute force
            let mut perms = Vec::new();
            permute(&mut idx, 0, &mut perms);
            for p in perms {
                prop_assert!(best <= a.distance_sq(&b.permuted(&p)) + 1e-15);
            }
        }
    }

    fn permute(v: &mut [usize; 4], i: usize, out: &mut Vec<Vec<usize>>) {
        if i == v.len() {
            out.push(v.to_vec());
            return;
        }
        for j in i..v.len() {
            v.swap(i, j);
            permute(v, i + 1, out);
            v.swap(i, j);
        }
    }
}
