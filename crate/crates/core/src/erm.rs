//! Empirical risk minimisation and population-level optimal codebooks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CERTIFY_GRADIENT_TOL, CERTIFY_RISK_TOL, DEDUP_TOL};
use crate::distributions::SourceDistribution;
use crate::geometry::{dist_sq, nearest, ClusterVector, Sample};
use crate::risk::{best_alignment, empirical_risk, expected_gradient, true_risk, OptimalSet};
use crate::seed::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Candidate codebooks beyond this count are refused by [`brute_force_erm`].
pub const BRUTE_FORCE_LIMIT: u128 = 20_000_000;

fn check_sample(sample: &Sample, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.len() < k {
        return Err(Error::TooFewPoints { n: sample.len(), k });
    }
    Ok(())
}

/// Within-segment sum of squares from prefix sums of centred values.
struct SegmentCost {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl SegmentCost {
    fn new(sorted: &[f64]) -> Self {
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let mut s1 = vec![0.0; sorted.len() + 1];
        let mut s2 = vec![0.0; sorted.len() + 1];
        for (i, x) in sorted.iter().enumerate() {
            let y = x - mean;
            s1[i + 1] = s1[i] + y;
            s2[i + 1] = s2[i] + y * y;
        }
        Self { s1, s2 }
    }

    /// Cost of points `i..j`.
    fn cost(&self, i: usize, j: usize) -> f64 {
        let m = (j - i) as f64;
        let a = self.s1[j] - self.s1[i];
        (self.s2[j] - self.s2[i] - a * a / m).max(0.0)
    }
}

fn fill_layer(
    cost: &SegmentCost,
    prev: &[f64],
    cur: &mut [f64],
    arg: &mut [usize],
    (j_lo, j_hi): (usize, usize),
    (o_lo, o_hi): (usize, usize),
) {
    if j_lo > j_hi {
        return;
    }
    let j = (j_lo + j_hi) / 2;
    let mut best = (f64::INFINITY, o_lo);
    for i in o_lo..=o_hi.min(j - 1) {
        let v = prev[i] + cost.cost(i, j);
        if v < best.0 {
            best = (v, i);
        }
    }
    cur[j] = best.0;
    arg[j] = best.1;
    if j > j_lo {
        fill_layer(cost, prev, cur, arg, (j_lo, j - 1), (o_lo, best.1));
    }
    fill_layer(cost, prev, cur, arg, (j + 1, j_hi), (best.1, o_hi));
}

/// Globally optimal k-means on the line: dynamic programming over
/// contiguous groups of the sorted sample, with the monotone split points
/// found by divide and conquer (`O(k n log n)`).
///
/// Returns the sorted centers and the empirical risk.
pub fn kmeans_1d_exact(sample: &Sample, k: usize) -> Result<(ClusterVector, f64)> {
    check_sample(sample, k)?;
    if sample.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: sample.dim(),
        });
    }
    let mut xs = sample.as_flat().to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let cost = SegmentCost::new(&xs);

    let mut prev: Vec<f64> = (0..=n)
        .map(|j| {
            if j == 0 {
                f64::INFINITY
            } else {
                cost.cost(0, j)
            }
        })
        .collect();
    let mut splits = vec![vec![0usize; n + 1]];
    for m in 2..=k {
        let mut cur = vec![f64::INFINITY; n + 1];
        let mut arg = vec![0usize; n + 1];
        fill_layer(&cost, &prev, &mut cur, &mut arg, (m, n), (m - 1, n - 1));
        splits.push(arg);
        prev = cur;
    }

    let mut bounds = vec![n];
    let mut j = n;
    for m in (1..k).rev() {
        j = splits[m][j];
        bounds.push(j);
    }
    bounds.push(0);
    bounds.reverse();
    let centers: Vec<f64> = bounds
        .windows(2)
        .map(|w| xs[w[0]..w[1]].iter().sum::<f64>() / (w[1] - w[0]) as f64)
        .collect();
    let c = ClusterVector::from_1d(&centers);
    let risk = empirical_risk(&c, sample)?;
    Ok((c, risk))
}

/// Stopping rules for [`lloyd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydOptions {
    pub max_iters: usize,
    /// Stop once an iteration lowers the empirical risk by less than this.
    pub tol: f64,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tol: 0.0,
        }
    }
}

/// Result of a Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub centers: ClusterVector,
    pub risk: f64,
    /// Iterations that moved the codebook.
    pub iterations: usize,
    /// Empirical risk before the first and after every iteration.
    pub history: Vec<f64>,
}

/// Lloyd's alternating assignment / centroid iteration. An empty cell is
/// moved onto the sample point farthest from its current cluster.
pub fn lloyd(sample: &Sample, init: &ClusterVector, opts: LloydOptions) -> Result<LloydRun> {
    check_sample(sample, init.k())?;
    if sample.dim() != init.dim() {
        return Err(Error::DimensionMismatch {
            expected: init.dim(),
            got: sample.dim(),
        });
    }
    let (k, d) = (init.k(), init.dim());
    let mut c = init.clone();
    let mut risk = empirical_risk(&c, sample)?;
    let mut history = vec![risk];
    let mut iterations = 0;
    let mut dists = vec![0.0; sample.len()];
    for _ in 0..opts.max_iters {
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, x) in sample.points().enumerate() {
            let (j, d2) = nearest(&c, x);
            dists[i] = d2;
            counts[j] += 1;
            for t in 0..d {
                sums[j * d + t] += x[t];
            }
        }
        let mut next = c.as_flat().to_vec();
        for j in 0..k {
            if counts[j] > 0 {
                for t in 0..d {
                    next[j * d + t] = sums[j * d + t] / counts[j] as f64;
                }
            }
        }
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..sample.len())
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("non-empty sample");
            next[j * d..(j + 1) * d].copy_from_slice(sample.point(far));
            dists[far] = 0.0;
        }
        let candidate = ClusterVector::from_flat(d, next)?;
        if candidate == c {
            break;
        }
        let new_risk = empirical_risk(&candidate, sample)?;
        if new_risk > risk {
            // Rounding can make a converged centroid step very slightly
            // worse; keep the better codebook.
            break;
        }
        let gain = risk - new_risk;
        c = candidate;
        risk = new_risk;
        history.push(risk);
        iterations += 1;
        if gain < opts.tol {
            break;
        }
    }
    Ok(LloydRun {
        centers: c,
        risk,
        iterations,
        history,
    })
}

/// k-means++ seeding: first center uniform over the sample, each further
/// one drawn with probability proportional to the squared distance to the
/// nearest chosen center.
pub fn kmeans_plus_plus(sample: &Sample, k: usize, rng: &mut ChaCha8Rng) -> Result<ClusterVector> {
    check_sample(sample, k)?;
    let n = sample.len();
    let mut coords = sample.point(rng.random_range(0..n)).to_vec();
    let mut d2: Vec<f64> = sample
        .points()
        .map(|x| crate::geometry::dist_sq(x, &coords))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|v| {
                    acc += v;
                    acc > u
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let p = sample.point(pick).to_vec();
        for (v, x) in d2.iter_mut().zip(sample.points()) {
            *v = v.min(crate::geometry::dist_sq(x, &p));
        }
        coords.extend(p);
    }
    ClusterVector::from_flat(sample.dim(), coords)
}

/// Best of `restarts` Lloyd runs from k-means++ seeds. Restart `r` uses the
/// seed derived from `(seed, r)`; ties go to the lowest restart.
pub fn multistart_erm(
    sample: &Sample,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<(ClusterVector, f64)> {
    if restarts == 0 {
        return Err(Error::InvalidInput("at least one restart is needed".into()));
    }
    check_sample(sample, k)?;
    let mut best: Option<(ClusterVector, f64)> = None;
    for r in 0..restarts {
        let mut rng = rng_from_seed(derive_seed(seed, &[r as u64]));
        let init = kmeans_plus_plus(sample, k, &mut rng)?;
        let mut run = lloyd(sample, &init, LloydOptions::default())?;
        while let Some(moved) = transfer_refine(sample, &run.centers)? {
            let next = lloyd(sample, &moved, LloydOptions::default())?;
            if next.risk >= run.risk {
                break;
            }
            run = next;
        }
        if best.as_ref().is_none_or(|b| run.risk < b.1) {
            best = Some((run.centers, run.risk));
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Single-point transfers between cells that strictly lower the empirical
/// risk, applied until none is left. Returns the resulting centroids, or
/// `None` when no transfer helps.
fn transfer_refine(sample: &Sample, c: &ClusterVector) -> Result<Option<ClusterVector>> {
    let (k, d) = (c.k(), c.dim());
    let mut labels: Vec<usize> = sample.points().map(|x| nearest(c, x).0).collect();
    let mut counts = vec![0usize; k];
    let mut means = vec![0.0; k * d];
    for (x, &j) in sample.points().zip(&labels) {
        counts[j] += 1;
        for t in 0..d {
            means[j * d + t] += x[t];
        }
    }
    for j in 0..k {
        if counts[j] == 0 {
            return Ok(None);
        }
        for t in 0..d {
            means[j * d + t] /= counts[j] as f64;
        }
    }
    let mut any = false;
    for _ in 0..100 {
        let mut moved = false;
        for (i, x) in sample.points().enumerate() {
            let a = labels[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let remove = na / (na - 1.0) * dist_sq(x, &means[a * d..(a + 1) * d]);
            let mut target = None;
            let mut best_delta = -1e-12 * remove.max(f64::MIN_POSITIVE);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let delta = nb / (nb + 1.0) * dist_sq(x, &means[b * d..(b + 1) * d]) - remove;
                if delta < best_delta {
                    best_delta = delta;
                    target = Some(b);
                }
            }
            if let Some(b) = target {
                let (na, nb) = (counts[a] as f64, counts[b] as f64);
                for t in 0..d {
                    means[a * d + t] = (means[a * d + t] * na - x[t]) / (na - 1.0);
                    means[b * d + t] = (means[b * d + t] * nb + x[t]) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                labels[i] = b;
                moved = true;
                any = true;
            }
        }
        if !moved {
            break;
        }
    }
    if !any {
        return Ok(None);
    }
    ClusterVector::from_flat(d, means).map(Some)
}

fn binomial(n: u128, r: u128) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Exhaustive search over codebooks whose clusters lie on a grid of the
/// given step covering the sample's bounding box. A test oracle for tiny
/// instances.
pub fn brute_force_erm(sample: &Sample, k: usize, step: f64) -> Result<(ClusterVector, f64)> {
    check_sample(sample, k)?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidInput("grid step must be positive".into()));
    }
    let d = sample.dim();
    let mut axes = Vec::with_capacity(d);
    for t in 0..d {
        let lo = sample.points().map(|p| p[t]).fold(f64::INFINITY, f64::min);
        let hi = sample
            .points()
            .map(|p| p[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        axes.push((0..count).map(|i| lo + i as f64 * step).collect::<Vec<_>>());
    }
    let grid: Vec<Vec<f64>> = match d {
        1 => axes[0].iter().map(|&x| vec![x]).collect(),
        _ => axes[0]
            .iter()
            .flat_map(|&x| axes[1].iter().map(move |&y| vec![x, y]))
            .collect(),
    };
    let g = grid.len();
    let candidates = binomial(g as u128 + k as u128 - 1, k as u128);
    if candidates > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(candidates));
    }
    let mut idx = vec![0usize; k];
    let mut best: Option<(ClusterVector, f64)> = None;
    loop {
        let c = ClusterVector::new(idx.iter().map(|&i| grid[i].clone()).collect())?;
        let r = empirical_risk(&c, sample)?;
        if best.as_ref().is_none_or(|b| r < b.1) {
            best = Some((c, r));
        }
        // Next non-decreasing index tuple.
        let Some(pos) = (0..k).rev().find(|&p| idx[p] + 1 < g) else {
            break;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[pos];
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Iterations of the population Lloyd map per start.
const POPULATION_MAX_ITERS: usize = 5000;
/// Lloyd stops once the expected gradient is this small.
const POPULATION_GRADIENT_TARGET: f64 = 1e-11;
/// Size and restarts of the fixed sample used to seed starts.
const SEED_SAMPLE_SIZE: usize = 20_000;
const SEED_SAMPLE_RESTARTS: usize = 8;
const SEED_STREAM: u64 = 0x6f70_7469_6d61_6c73;
/// Seeded perturbations of each structured start.
const PERTURBATIONS: usize = 3;

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Population Lloyd: every cluster moves to the conditional mean of its
/// cell. Returns `None` if a cell loses all its mass.
fn population_lloyd(
    start: &ClusterVector,
    dist: &SourceDistribution,
) -> Result<Option<ClusterVector>> {
    let d = start.dim();
    let mut c = start.clone();
    let mut last_grad = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..POPULATION_MAX_ITERS {
        let moments = dist.cell_moments(&c)?;
        if moments.iter().any(|m| !(m.mass > 1e-300)) {
            return Ok(None);
        }
        let grad = moments
            .iter()
            .flat_map(|m| m.offset[..d].iter().map(|o| 2.0 * o.abs()))
            .fold(0.0, f64::max);
        if grad <= POPULATION_GRADIENT_TARGET {
            break;
        }
        if grad >= last_grad {
            stalled += 1;
            if stalled > 20 {
                break;
            }
        } else {
            stalled = 0;
        }
        last_grad = last_grad.min(grad);
        let mut next = c.as_flat().to_vec();
        for (j, m) in moments.iter().enumerate() {
            for t in 0..d {
                next[j * d + t] += m.offset[t] / m.mass;
            }
        }
        c = ClusterVector::from_flat(d, next)?;
    }
    Ok(Some(c))
}

fn structured_starts(dist: &SourceDistribution, k: usize) -> Result<Vec<ClusterVector>> {
    let d = dist.dim();
    let mut starts = Vec::new();
    let locations = dist.component_locations();
    if locations.len() >= k && binomial(locations.len() as u128, k as u128) <= 64 {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            starts.push(ClusterVector::new(
                idx.iter().map(|&i| locations[i].clone()).collect(),
            )?);
            let Some(pos) = (0..k).rev().find(|&p| idx[p] < locations.len() - k + p) else {
                break;
            };
            idx[pos] += 1;
            for q in pos + 1..k {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }

    let sample = dist.sample(derive_seed(SEED_STREAM, &[0]), SEED_SAMPLE_SIZE)?;
    if d == 1 {
        let mut xs = sample.as_flat().to_vec();
        xs.sort_by(f64::total_cmp);
        let q: Vec<f64> = (0..k)
            .map(|j| xs[((j as f64 + 0.5) / k as f64 * xs.len() as f64) as usize])
            .collect();
        starts.push(ClusterVector::from_1d(&q));
        starts.push(kmeans_1d_exact(&sample, k)?.0);
    }
    for r in 0..SEED_SAMPLE_RESTARTS {
        let mut rng = rng_from_seed(derive_seed(SEED_STREAM, &[1, r as u64]));
        let init = kmeans_plus_plus(&sample, k, &mut rng)?;
        starts.push(lloyd(&sample, &init, LloydOptions::default())?.centers);
    }

    let spread = dist.second_moment()?.sqrt().max(1e-3);
    let base = starts.len();
    for s in 0..base {
        for p in 0..PERTURBATIONS {
            let mut rng = rng_from_seed(derive_seed(SEED_STREAM, &[2, s as u64, p as u64]));
            let coords = starts[s]
                .as_flat()
                .iter()
                .map(|x| x + 0.05 * spread * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            starts.push(ClusterVector::from_flat(d, coords)?);
        }
    }
    Ok(starts)
}

/// The set of optimal codebooks of `dist`, found by population Lloyd from
/// structured starts (component locations, quantiles, k-means solutions on
/// a large fixed sample, and seeded perturbations of these).
///
/// A candidate is kept when the sup-norm of its expected gradient is at
/// most [`CERTIFY_GRADIENT_TOL`] and its risk is within
/// [`CERTIFY_RISK_TOL`] of the best; candidates closer than [`DEDUP_TOL`]
/// after relabelling are merged. Members are returned in canonical order.
pub fn optimal_clusters(dist: &SourceDistribution, k: usize) -> Result<OptimalSet> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut certified: Vec<(ClusterVector, f64)> = Vec::new();
    for start in structured_starts(dist, k)? {
        let Some(c) = population_lloyd(&start, dist)? else {
            continue;
        };
        if c.check_distinct().is_err() {
            continue;
        }
        if sup_norm(&expected_gradient(&c, dist)?) > CERTIFY_GRADIENT_TOL {
            continue;
        }
        let c = c.canonical();
        let r = true_risk(&c, dist)?;
        certified.push((c, r));
    }
    let best = certified.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::CertificationFailed(format!(
            "no stationary codebook with |P Delta| <= {CERTIFY_GRADIENT_TOL:e} was found for k = {k}"
        )));
    }
    let mut members: Vec<ClusterVector> = Vec::new();
    for (c, r) in certified {
        if r - best > CERTIFY_RISK_TOL {
            continue;
        }
        if members
            .iter()
            .all(|m| best_alignment(&c, m).1.sqrt() > DEDUP_TOL)
        {
            members.push(c);
        }
    }
    members.sort_by(|a, b| {
        a.as_flat()
            .iter()
            .zip(b.as_flat())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    OptimalSet::new(members, dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(xs: &[f64]) -> Sample {
        Sample::from_1d(xs)
    }

    #[test]
    fn exact_examples() {
        let (c, r) = kmeans_1d_exact(&sample(&[0.0, 1.0, 4.0, 5.0]), 2).unwrap();
        assert_eq!(c, ClusterVector::from_1d(&[0.5, 4.5]));
        assert_eq!(r, 0.25);
        let (c, r) = kmeans_1d_exact(&sample(&[3.0, 1.0, 2.0]), 3).unwrap();
        assert_eq!(c, ClusterVector::from_1d(&[1.0, 2.0, 3.0]));
        assert_eq!(r, 0.0);
        let (c, r) = kmeans_1d_exact(&sample(&[0.0, 10.0]), 1).unwrap();
        assert_eq!(c, ClusterVector::from_1d(&[5.0]));
        assert_eq!(r, 25.0);
        assert_eq!(
            kmeans_1d_exact(&sample(&[1.0]), 2),
            Err(Error::TooFewPoints { n: 1, k: 2 })
        );
    }

    #[test]
    fn lloyd_examples() {
        let s = sample(&[0.0, 1.0, 4.0, 5.0]);
        let run = lloyd(
            &s,
            &ClusterVector::from_1d(&[0.0, 5.0]),
            LloydOptions::default(),
        )
        .unwrap();
        assert_eq!(run.centers, ClusterVector::from_1d(&[0.5, 4.5]));
        assert_eq!(run.risk, 0.25);

        let (opt, _) = kmeans_1d_exact(&s, 2).unwrap();
        let run = lloyd(&s, &opt, LloydOptions::default()).unwrap();
        assert_eq!(run.iterations, 0);
        assert_eq!(run.centers, opt);
    }

    #[test]
    fn lloyd_reseeds_empty_cells() {
        let s = sample(&[0.0, 1.0, 4.0, 5.0]);
        // The cluster at 100 owns nothing and is moved onto a sample point.
        let run = lloyd(
            &s,
            &ClusterVector::from_1d(&[0.0, 100.0]),
            LloydOptions::default(),
        )
        .unwrap();
        assert_eq!(run.risk, 0.25);
    }

    #[test]
    fn brute_force_examples() {
        let s = sample(&[0.0, 1.0, 4.0, 5.0]);
        let (c, r) = brute_force_erm(&s, 2, 0.5).unwrap();
        assert_eq!(c, ClusterVector::from_1d(&[0.5, 4.5]));
        assert_eq!(r, 0.25);
        let s = sample(&[0.0, 0.3, 1.1]);
        let (c, _) = brute_force_erm(&s, 1, 0.1).unwrap();
        assert!((c.point(0)[0] - 0.5).abs() < 1e-12);
        let big = Sample::from_1d(&(0..50).map(|i| i as f64).collect::<Vec<_>>());
        assert!(matches!(
            brute_force_erm(&big, 8, 0.01),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn multistart_is_deterministic() {
        let dist = SourceDistribution::ball_mixture(
            vec![vec![0.5, 0.0], vec![-0.25, 0.43], vec![-0.25, -0.43]],
            0.05,
        )
        .unwrap();
        let s = dist.sample(4, 300).unwrap();
        let a = multistart_erm(&s, 3, 5, 17).unwrap();
        assert_eq!(a, multistart_erm(&s, 3, 5, 17).unwrap());
    }

    #[test]
    fn multistart_matches_exact_on_projections() {
        let dist = SourceDistribution::ball_mixture(
            vec![vec![0.5, 0.0], vec![-0.25, 0.43], vec![-0.25, -0.43]],
            0.05,
        )
        .unwrap();
        let trials = 40;
        let mut hits = 0;
        for seed in 0..trials {
            let s = dist.sample(1000 + seed, 500).unwrap().project_first();
            let (_, exact) = kmeans_1d_exact(&s, 3).unwrap();
            let (_, multi) = multistart_erm(&s, 3, 50, seed).unwrap();
            assert!(exact <= multi + 1e-12);
            if multi <= exact + 1e-9 {
                hits += 1;
            }
        }
        assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
    }

    #[test]
    fn uniform_optimum() {
        let opt = optimal_clusters(&SourceDistribution::uniform_unit_interval(), 2).unwrap();
        assert_eq!(opt.members().len(), 1);
        let m = &opt.members()[0];
        assert!((m.point(0)[0] - 0.25).abs() < 1e-8);
        assert!((m.point(1)[0] - 0.75).abs() < 1e-8);
        assert!((opt.risk() - 1.0 / 48.0).abs() < 1e-12);
    }

    #[test]
    fn counterexample_optimum() {
        let dist = SourceDistribution::tail_counterexample(2.0, 10.0).unwrap();
        let opt = optimal_clusters(&dist, 3).unwrap();
        assert_eq!(opt.members().len(), 1);
        let m = &opt.members()[0];
        for (got, want) in m.as_flat().iter().zip([1.0, 11.0, 21.0]) {
            assert!((got - want).abs() < 1e-9, "{m:?}");
        }
        assert!((opt.risk() - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn ball_mixture_optimum_is_the_centers() {
        let centers = vec![vec![0.5, 0.0], vec![-0.25, 0.43], vec![-0.25, -0.43]];
        let dist = SourceDistribution::ball_mixture(centers.clone(), 0.05).unwrap();
        let opt = optimal_clusters(&dist, 3).unwrap();
        assert_eq!(opt.members().len(), 1);
        let want = ClusterVector::new(centers).unwrap();
        assert!(best_alignment(&opt.members()[0], &want).1.sqrt() < 1e-6);

        // Reordering the components leaves the set unchanged.
        let shuffled = SourceDistribution::ball_mixture(
            vec![vec![-0.25, -0.43], vec![0.5, 0.0], vec![-0.25, 0.43]],
            0.05,
        )
        .unwrap();
        let again = optimal_clusters(&shuffled, 3).unwrap();
        assert_eq!(again.members().len(), 1);
        assert!(
            best_alignment(&again.members()[0], &opt.members()[0])
                .1
                .sqrt()
                < 1e-9
        );
    }

    /// Every split of the sorted sample into `k` contiguous groups.
    fn exhaustive_contiguous(xs: &[f64], k: usize) -> f64 {
        fn rec(xs: &[f64], k: usize) -> f64 {
            if k == 1 {
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                return xs.iter().map(|x| (x - m).powi(2)).sum();
            }
            (1..=xs.len() - (k - 1))
                .map(|i| rec(&xs[..i], 1) + rec(&xs[i..], k - 1))
                .fold(f64::INFINITY, f64::min)
        }
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        rec(&s, k) / xs.len() as f64
    }

    proptest! {
        #[test]
        fn exact_matches_exhaustive(
            xs in prop::collection::vec(-5.0f64..5.0, 3..12),
            k in 1usize..4,
        ) {
            prop_assume!(xs.len() >= k);
            let (_, r) = kmeans_1d_exact(&sample(&xs), k).unwrap();
            prop_assert!((r - exhaustive_contiguous(&xs, k)).abs() <= 1e-12);
        }

        #[test]
        fn lloyd_risk_never_increases(
            xs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 10..60),
            seed in 0u64..1000,
        ) {
            let pts: Vec<[f64; 2]> = xs.iter().map(|&(a, b)| [a, b]).collect();
            let s = Sample::from_2d(&pts);
            let mut rng = rng_from_seed(seed);
            let init = kmeans_plus_plus(&s, 4, &mut rng).unwrap();
            let run = lloyd(&s, &init, LloydOptions::default()).unwrap();
            for w in run.history.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}
