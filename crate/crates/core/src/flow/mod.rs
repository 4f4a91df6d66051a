//! Particle advection through time-windowed velocity fields.
//!
//! Fields expose the time windows outside which they vanish. Integration is
//! classical RK4 with a fixed number of substeps per window, so runs are
//! deterministic; particles the field leaves at rest for a whole window are
//! skipped without stepping.

mod oracle;
mod stats;

pub use oracle::{predict_endpoint, sigma_partner};
pub use stats::{
    digit_match_rate, measure_preservation_test, obstruction_demo, pair_endpoints, predicted_address, pushforward,
    sample_points, two_to_one_check, CollisionReport, DigitMatchReport, PushforwardHistogram, BOUNDARY_EXCLUSION,
};

use std::io::Write;

use rayon::prelude::*;

use crate::dyadic::{wrap_unit, TorusPoint};
use crate::error::{Error, Result};

/// Smallest substep the integrator accepts.
pub const STEP_FLOOR: f64 = 1e-13;

/// A time interval on which a field may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    /// Reference duration for step sizing (the stage length for stage fields).
    pub scale: f64,
    /// Field-specific identifier passed back to [`VelocityField::velocity`].
    pub key: usize,
}

pub trait VelocityField: Sync {
    /// End of the time domain `[0, horizon]`.
    fn horizon(&self) -> f64;

    /// Disjoint windows in increasing time order; the field vanishes outside them.
    fn windows(&self) -> Vec<Window>;

    /// Velocity at `p` in `[0, 1)^2` and time `t` inside `window`.
    fn velocity(&self, window: &Window, t: f64, p: [f64; 2]) -> [f64; 2];

    /// True if the velocity vanishes at `p` throughout `window`, so the point
    /// stays put (the field must then vanish on a neighbourhood of its orbit).
    fn is_frozen(&self, _window: &Window, _p: [f64; 2]) -> bool {
        false
    }
}

/// `u(t, x) = -v(T - t, x)`: the field whose flow runs the trajectories of `v` backwards.
pub struct Reversed<'a, F: ?Sized>(pub &'a F);

impl<F: VelocityField + ?Sized> VelocityField for Reversed<'_, F> {
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    fn windows(&self) -> Vec<Window> {
        let h = self.0.horizon();
        self.0.windows().into_iter().rev().map(|w| Window { start: h - w.end, end: h - w.start, ..w }).collect()
    }

    #[inline]
    fn velocity(&self, window: &Window, t: f64, p: [f64; 2]) -> [f64; 2] {
        let v = self.0.velocity(window, self.0.horizon() - t, p);
        [-v[0], -v[1]]
    }

    fn is_frozen(&self, window: &Window, p: [f64; 2]) -> bool {
        self.0.is_frozen(window, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Integrate the field itself.
    Forward,
    /// Integrate its time reversal `u(t) = -v(T - t)`.
    Backward,
}

/// Substep schedule for RK4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    /// Substeps per window `scale`; the step never exceeds `scale / base_steps_per_stage`.
    pub base_steps_per_stage: usize,
    /// Extra subdivision of the first and last fifth of each window.
    pub refinement: usize,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self { base_steps_per_stage: 4096, refinement: 1 }
    }
}

impl StepPolicy {
    pub fn coarse() -> Self {
        Self { base_steps_per_stage: 256, refinement: 1 }
    }

    pub fn with_base(base_steps_per_stage: usize) -> Self {
        Self { base_steps_per_stage, ..Self::default() }
    }
}

/// Time-stamped particle path; `points` are wrapped to `[0, 1)^2`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<TorusPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end(&self) -> Option<TorusPoint> {
        self.points.last().copied()
    }

    fn push(&mut self, t: f64, p: [f64; 2]) {
        self.times.push(t);
        self.points.push(TorusPoint::new(p[0], p[1]));
    }

    /// CSV with columns `t,x1,x2`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x1,x2")?;
        for (t, p) in self.times.iter().zip(&self.points) {
            writeln!(out, "{t:.17e},{:.17e},{:.17e}", p.x1, p.x2)?;
        }
        Ok(())
    }
}

#[inline]
fn eval<F: VelocityField + ?Sized>(f: &F, w: &Window, t: f64, p: [f64; 2]) -> [f64; 2] {
    f.velocity(w, t, [wrap_unit(p[0]), wrap_unit(p[1])])
}

#[inline]
fn rk4_step<F: VelocityField + ?Sized>(f: &F, w: &Window, t: f64, h: f64, p: [f64; 2]) -> [f64; 2] {
    let k1 = eval(f, w, t, p);
    let k2 = eval(f, w, t + 0.5 * h, [p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]]);
    let k3 = eval(f, w, t + 0.5 * h, [p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]]);
    let k4 = eval(f, w, t + h, [p[0] + h * k3[0], p[1] + h * k3[1]]);
    [
        p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Splits `[a, b]` into ramps and core with their substep counts.
fn segments(a: f64, b: f64, scale: f64, policy: &StepPolicy) -> Result<Vec<(f64, f64, usize)>> {
    if policy.base_steps_per_stage == 0 || policy.refinement == 0 {
        return Err(Error::InvalidParam { name: "policy", reason: "step counts must be positive".into() });
    }
    let h_max = scale / policy.base_steps_per_stage as f64;
    let count = |len: f64, refine: usize| ((len / h_max).ceil() as usize).max(1) * refine;
    let parts = if policy.refinement > 1 {
        let r = 0.2 * (b - a);
        vec![(a, a + r, policy.refinement), (a + r, b - r, 1), (b - r, b, policy.refinement)]
    } else {
        vec![(a, b, 1)]
    };
    let mut out = Vec::with_capacity(parts.len());
    for (lo, hi, refine) in parts {
        let n = count(hi - lo, refine);
        let h = (hi - lo) / n as f64;
        if h < STEP_FLOOR {
            return Err(Error::StepUnderflow { step: h, floor: STEP_FLOOR });
        }
        out.push((lo, hi, n));
    }
    Ok(out)
}

fn run<F: VelocityField + ?Sized>(
    f: &F,
    p0: [f64; 2],
    t0: f64,
    t1: f64,
    policy: &StepPolicy,
    mut record: Option<&mut Trajectory>,
) -> Result<[f64; 2]> {
    let horizon = f.horizon();
    for t in [t0, t1] {
        if !(t >= 0.0 && t <= horizon) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
    }
    let mut p = p0;
    if let Some(tr) = record.as_deref_mut() {
        tr.push(t0, p);
    }
    let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    let forward = t0 <= t1;
    let mut windows = f.windows();
    if !forward {
        windows.reverse();
    }
    for w in &windows {
        let a = w.start.max(lo);
        let b = w.end.min(hi);
        if b <= a || f.is_frozen(w, [wrap_unit(p[0]), wrap_unit(p[1])]) {
            continue;
        }
        let mut segs = segments(a, b, w.scale, policy)?;
        if !forward {
            segs.reverse();
        }
        for (s_lo, s_hi, n) in segs {
            let (ta, tb) = if forward { (s_lo, s_hi) } else { (s_hi, s_lo) };
            let h = (tb - ta) / n as f64;
            for i in 0..n {
                let t = ta + h * i as f64;
                p = rk4_step(f, w, t, h, p);
                if let Some(tr) = record.as_deref_mut() {
                    tr.push(t + h, p);
                }
            }
        }
    }
    if let Some(tr) = record {
        if tr.times.last() != Some(&t1) {
            tr.push(t1, p);
        }
    }
    Ok(p)
}

/// Trajectory from `(t0, p0)` to time `t1` (which may precede `t0`).
pub fn integrate<F: VelocityField + ?Sized>(
    field: &F,
    direction: Direction,
    p0: TorusPoint,
    t0: f64,
    t1: f64,
    policy: &StepPolicy,
) -> Result<Trajectory> {
    let mut tr = Trajectory::default();
    let p = [p0.x1, p0.x2];
    match direction {
        Direction::Forward => run(field, p, t0, t1, policy, Some(&mut tr))?,
        Direction::Backward => run(&Reversed(field), p, t0, t1, policy, Some(&mut tr))?,
    };
    Ok(tr)
}

/// Unwrapped endpoint of the path from `(t0, p0)` to `t1`.
pub fn advance<F: VelocityField + ?Sized>(
    field: &F,
    direction: Direction,
    p0: [f64; 2],
    t0: f64,
    t1: f64,
    policy: &StepPolicy,
) -> Result<[f64; 2]> {
    match direction {
        Direction::Forward => run(field, p0, t0, t1, policy, None),
        Direction::Backward => run(&Reversed(field), p0, t0, t1, policy, None),
    }
}

/// Endpoints of many particles, in input order.
pub fn advect_batch<F: VelocityField + ?Sized>(
    field: &F,
    direction: Direction,
    points: &[TorusPoint],
    t0: f64,
    t1: f64,
    policy: &StepPolicy,
) -> Result<Vec<TorusPoint>> {
    points
        .par_iter()
        .map(|p| advance(field, direction, [p.x1, p.x2], t0, t1, policy).map(|q| TorusPoint::new(q[0], q[1])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rigid rotation about (1/2, 1/2) at unit angular speed on `[0, 1]`.
    struct Spin;

    impl VelocityField for Spin {
        fn horizon(&self) -> f64 {
            1.0
        }
        fn windows(&self) -> Vec<Window> {
            vec![Window { start: 0.0, end: 1.0, scale: 1.0, key: 0 }]
        }
        fn velocity(&self, _: &Window, _: f64, p: [f64; 2]) -> [f64; 2] {
            [-(p[1] - 0.5), p[0] - 0.5]
        }
    }

    #[test]
    fn rotation_is_exact_to_rk4_accuracy() {
        let p = TorusPoint::new(0.7, 0.5);
        let tr = integrate(&Spin, Direction::Forward, p, 0.0, 1.0, &StepPolicy::with_base(64)).unwrap();
        let e = tr.end().unwrap();
        assert!((e.x1 - (0.5 + 0.2 * 1f64.cos())).abs() < 1e-9);
        assert!((e.x2 - (0.5 + 0.2 * 1f64.sin())).abs() < 1e-9);
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert_eq!(tr.len(), 65);
    }

    #[test]
    fn backward_undoes_forward() {
        let p = [0.62, 0.41];
        let policy = StepPolicy::with_base(128);
        let q = advance(&Spin, Direction::Forward, p, 0.0, 1.0, &policy).unwrap();
        let back = advance(&Spin, Direction::Backward, q, 0.0, 1.0, &policy).unwrap();
        assert!((back[0] - p[0]).abs() < 1e-10 && (back[1] - p[1]).abs() < 1e-10);
        let rev = advance(&Spin, Direction::Forward, q, 1.0, 0.0, &policy).unwrap();
        assert!((rev[0] - p[0]).abs() < 1e-10 && (rev[1] - p[1]).abs() < 1e-10);
    }

    #[test]
    fn batch_preserves_order() {
        let pts: Vec<TorusPoint> = (0..5).map(|i| TorusPoint::new(0.1 * i as f64 + 0.3, 0.4)).collect();
        let policy = StepPolicy::with_base(32);
        let out = advect_batch(&Spin, Direction::Forward, &pts, 0.0, 0.5, &policy).unwrap();
        for (p, q) in pts.iter().zip(&out) {
            let single = integrate(&Spin, Direction::Forward, *p, 0.0, 0.5, &policy).unwrap().end().unwrap();
            assert_eq!(single, *q);
        }
    }

    #[test]
    fn range_and_policy_errors() {
        let p = TorusPoint::new(0.5, 0.5);
        let policy = StepPolicy::default();
        assert!(matches!(
            integrate(&Spin, Direction::Forward, p, 0.0, 1.5, &policy),
            Err(Error::TimeOutOfRange { .. })
        ));
        let bad = StepPolicy { base_steps_per_stage: 0, refinement: 1 };
        assert!(integrate(&Spin, Direction::Forward, p, 0.0, 1.0, &bad).is_err());
        let tiny = StepPolicy { base_steps_per_stage: usize::MAX / 4, refinement: 1 };
        assert!(matches!(
            integrate(&Spin, Direction::Forward, p, 0.0, 1.0, &tiny),
            Err(Error::StepUnderflow { .. })
        ));
    }

    #[test]
    fn refinement_adds_ramp_steps() {
        let p = TorusPoint::new(0.7, 0.5);
        let coarse = integrate(&Spin, Direction::Forward, p, 0.0, 1.0, &StepPolicy::with_base(10)).unwrap();
        let refined =
            integrate(&Spin, Direction::Forward, p, 0.0, 1.0, &StepPolicy { base_steps_per_stage: 10, refinement: 3 })
                .unwrap();
        assert!(refined.len() > coarse.len());
    }
}
