//! Pushforward statistics and digit-map checks.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::oracle::{predict_endpoint, sigma_partner};
use super::{advance, advect_batch, Direction, StepPolicy, VelocityField};
use crate::dyadic::{encode, psi_steps, DigitAddress, TorusPoint};
use crate::error::{Error, Result};
use crate::field::{distance_to_cell_boundaries, Field};

/// Starting points this close to a cell boundary are left out of digit statistics.
pub const BOUNDARY_EXCLUSION: f64 = 2e-4;

/// Largest histogram depth (`4^12` boxes).
const MAX_HIST_DEPTH: u32 = 12;

/// `count` i.i.d. uniform points of the torus.
pub fn sample_points(count: usize, seed: u64) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| TorusPoint::new(rng.random(), rng.random())).collect()
}

/// Occupancy of the `4^depth` dyadic squares.
#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardHistogram {
    pub depth: u32,
    pub counts: Vec<u64>,
    pub total: u64,
    pub chi_square: f64,
    /// Upper tail probability of `chi_square` under uniformity.
    pub p_value: f64,
    pub coverage_fraction: f64,
}

impl PushforwardHistogram {
    pub fn from_points(points: &[TorusPoint], depth: u32) -> Result<Self> {
        if depth == 0 || depth > MAX_HIST_DEPTH {
            return Err(Error::InvalidDepth(depth));
        }
        let boxes = 1usize << (2 * depth);
        let mut counts = vec![0u64; boxes];
        for p in points {
            counts[encode(*p, depth)?.box_index()] += 1;
        }
        let total = points.len() as u64;
        let expected = total as f64 / boxes as f64;
        let chi_square = if total == 0 {
            0.0
        } else {
            counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
        };
        let dist = ChiSquared::new((boxes - 1) as f64).expect("positive degrees of freedom");
        let p_value = if total == 0 { 1.0 } else { dist.sf(chi_square) };
        let coverage_fraction = counts.iter().filter(|&&c| c > 0).count() as f64 / boxes as f64;
        Ok(Self { depth, counts, total, chi_square, p_value, coverage_fraction })
    }

    pub fn is_uniform(&self, level: f64) -> bool {
        self.p_value > level
    }

    /// CSV with columns `box_index,count`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "box_index,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{i},{c}")?;
        }
        Ok(())
    }
}

/// Histogram of `sample_count` uniform points advected from `t0` to `t1`.
#[allow(clippy::too_many_arguments)]
pub fn pushforward<F: VelocityField + ?Sized>(
    field: &F,
    direction: Direction,
    t0: f64,
    t1: f64,
    sample_count: usize,
    depth: u32,
    seed: u64,
    policy: &StepPolicy,
) -> Result<PushforwardHistogram> {
    let pts = sample_points(sample_count, seed);
    let out = advect_batch(field, direction, &pts, t0, t1, policy)?;
    PushforwardHistogram::from_points(&out, depth)
}

/// Histograms of uniform samples advected from time 0 through each checkpoint.
pub fn measure_preservation_test<F: VelocityField + ?Sized>(
    field: &F,
    direction: Direction,
    checkpoints: &[f64],
    sample_count: usize,
    depth: u32,
    seed: u64,
    policy: &StepPolicy,
) -> Result<Vec<PushforwardHistogram>> {
    let mut pts = sample_points(sample_count, seed);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        if c < t {
            return Err(Error::InvalidParam { name: "checkpoints", reason: "must be nondecreasing".into() });
        }
        pts = advect_batch(field, direction, &pts, t, c, policy)?;
        t = c;
        out.push(PushforwardHistogram::from_points(&pts, depth)?);
    }
    Ok(out)
}

/// The settled digits after `stages` steps: first coordinate at odd
/// positions `<= stages`, second coordinate at even positions `<= stages + 1`.
fn settled_masks(depth: u32, stages: u32) -> (u64, u64) {
    let bit = |n: u32| 1u64 << (depth - n);
    let m1 = (1..=stages.min(depth)).filter(|n| n % 2 == 1).fold(0, |m, n| m | bit(n));
    let m2 = (1..=(stages + 1).min(depth)).filter(|n| n % 2 == 0).fold(0, |m, n| m | bit(n));
    (m1, m2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitMatchReport {
    pub samples: usize,
    pub excluded: usize,
    /// Endpoints whose whole depth-`(stages + 2)` address equals the predicted one.
    pub matched: usize,
    /// Endpoints agreeing with the prediction on the settled digits.
    pub settled_matched: usize,
}

impl DigitMatchReport {
    fn considered(&self) -> usize {
        self.samples - self.excluded
    }

    pub fn rate(&self) -> f64 {
        self.matched as f64 / self.considered().max(1) as f64
    }

    pub fn settled_rate(&self) -> f64 {
        self.settled_matched as f64 / self.considered().max(1) as f64
    }

    pub fn excluded_fraction(&self) -> f64 {
        self.excluded as f64 / self.samples.max(1) as f64
    }
}

/// Fraction of uniform starting points whose endpoint under the forward field
/// carries the digits predicted by the stepwise digit map.
pub fn digit_match_rate(field: &Field, sample_count: usize, seed: u64, policy: &StepPolicy) -> Result<DigitMatchReport> {
    let stages = field.n_stages();
    let depth = stages + 2;
    let (m1, m2) = settled_masks(depth, stages);
    let horizon = field.t_end();
    let pts = sample_points(sample_count, seed);
    let outcomes = pts
        .par_iter()
        .map(|p| -> Result<Option<(bool, bool)>> {
            if distance_to_cell_boundaries(stages, [p.x1, p.x2]) < BOUNDARY_EXCLUSION {
                return Ok(None);
            }
            let want = psi_steps(&encode(*p, depth)?, stages)?;
            let end = advance(field, Direction::Forward, [p.x1, p.x2], 0.0, horizon, policy)?;
            let got = encode(TorusPoint::new(end[0], end[1]), depth)?;
            let (g1, g2) = got.words();
            let (w1, w2) = want.words();
            Ok(Some((got == want, (g1 ^ w1) & m1 == 0 && (g2 ^ w2) & m2 == 0)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = DigitMatchReport { samples: sample_count, excluded: 0, matched: 0, settled_matched: 0 };
    for o in outcomes {
        match o {
            None => report.excluded += 1,
            Some((full, settled)) => {
                report.matched += usize::from(full);
                report.settled_matched += usize::from(settled);
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionReport {
    pub pairs: usize,
    /// Pairs whose endpoints share the depth-`stages` cylinder.
    pub collided: usize,
    pub median_distance: f64,
    /// Torus distances between paired endpoints, sorted.
    pub distances: Vec<f64>,
}

impl CollisionReport {
    pub fn collision_rate(&self) -> f64 {
        self.collided as f64 / self.pairs.max(1) as f64
    }
}

fn collision_report<I: IntoIterator<Item = (TorusPoint, TorusPoint)>>(ends: I, stages: u32) -> Result<CollisionReport> {
    let mut distances = Vec::new();
    let mut collided = 0;
    for (a, b) in ends {
        distances.push(a.distance(b));
        if encode(a, stages)? == encode(b, stages)? {
            collided += 1;
        }
    }
    distances.sort_by(f64::total_cmp);
    let median_distance = if distances.is_empty() { f64::NAN } else { distances[distances.len() / 2] };
    Ok(CollisionReport { pairs: distances.len(), collided, median_distance, distances })
}

/// Advects pairs `x`, `x'` related by the digit involution at depth
/// `stages + 2` and compares their endpoints. Both members are drawn from
/// the set where the analytic endpoint prediction applies.
pub fn two_to_one_check(field: &Field, sample_count: usize, seed: u64, policy: &StepPolicy) -> Result<CollisionReport> {
    let stages = field.n_stages();
    let depth = stages + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(sample_count);
    let usable = |p: TorusPoint| {
        distance_to_cell_boundaries(stages, [p.x1, p.x2]) >= BOUNDARY_EXCLUSION
            && predict_endpoint(field, [p.x1, p.x2], stages).is_some()
    };
    let mut attempts = 0usize;
    while pairs.len() < sample_count {
        attempts += 1;
        if attempts > 100 * sample_count.max(1) {
            return Err(Error::InvalidParam { name: "sample_count", reason: "good set too small to draw pairs".into() });
        }
        let x = TorusPoint::new(rng.random(), rng.random());
        let y = sigma_partner(x, depth)?;
        if usable(x) && usable(y) {
            pairs.push((x, y));
        }
    }
    pair_endpoints(field, &pairs, stages, policy)
}

/// Collision statistics for arbitrary starting pairs.
pub fn pair_endpoints(
    field: &Field,
    pairs: &[(TorusPoint, TorusPoint)],
    stages: u32,
    policy: &StepPolicy,
) -> Result<CollisionReport> {
    let flat: Vec<TorusPoint> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let ends = advect_batch(field, Direction::Forward, &flat, 0.0, field.t_end(), policy)?;
    collision_report(ends.chunks(2).map(|c| (c[0], c[1])), stages)
}

/// Coverage of the dyadic grid by uniform samples advected under the
/// backward-construction field `u = -v(T - t)` over the whole horizon.
///
/// The integrator's single path through each starting point is the
/// selection being tested; the outcome is qualitative.
pub fn obstruction_demo(
    field: &Field,
    sample_count: usize,
    depth: u32,
    seed: u64,
    policy: &StepPolicy,
) -> Result<PushforwardHistogram> {
    pushforward(field, Direction::Backward, 0.0, field.t_end(), sample_count, depth, seed, policy)
}

/// Depth-`depth` address of the symbolic prediction for a starting point.
pub fn predicted_address(p: TorusPoint, stages: u32, depth: u32) -> Result<DigitAddress> {
    psi_steps(&encode(p, depth)?, stages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_of_grid_centres_is_exactly_uniform() {
        let pts: Vec<TorusPoint> = (0..16)
            .flat_map(|i| (0..16).map(move |j| TorusPoint::new((i as f64 + 0.5) / 16.0, (j as f64 + 0.5) / 16.0)))
            .collect();
        let h = PushforwardHistogram::from_points(&pts, 3).unwrap();
        assert_eq!(h.total, 256);
        assert_eq!(h.chi_square, 0.0);
        assert_eq!(h.coverage_fraction, 1.0);
        assert!(h.p_value > 0.999);
    }

    #[test]
    fn concentrated_histogram_fails() {
        let pts = vec![TorusPoint::new(0.1, 0.1); 1000];
        let h = PushforwardHistogram::from_points(&pts, 2).unwrap();
        assert_eq!(h.coverage_fraction, 1.0 / 16.0);
        assert!(h.p_value < 1e-10);
        assert!(PushforwardHistogram::from_points(&pts, 0).is_err());
    }

    #[test]
    fn settled_mask_positions() {
        // depth 6, 4 stages: first coordinate digits 1, 3; second 2, 4
        let (m1, m2) = settled_masks(6, 4);
        assert_eq!(m1, 0b101000);
        assert_eq!(m2, 0b010100);
    }

    #[test]
    fn sampler_is_deterministic() {
        assert_eq!(sample_points(10, 3), sample_points(10, 3));
        assert_ne!(sample_points(10, 3), sample_points(10, 4));
    }
}
