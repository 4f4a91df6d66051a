//! The assembled velocity field on the torus.
//!
//! Stage `n` occupies `[tau_{n-1}, tau_n)` and is split into two halves of
//! length `tau^n / 2`. In each half a block is placed on every cell of
//! [`cells_for_stage`] by pulling a unit-square stream function back through
//! the cell's affine chart and taking `grad_perp`, so the field is
//! divergence free by construction. Its amplitude makes every good orbit
//! turn by exactly half a period over the half-window, which is the point
//! reflection through the cell centre. The two reflections of a stage compose
//! to the translation that flips one binary digit.

mod cells;
mod manifest;
mod norms;
mod params;

pub use cells::{
    boundary_resolution, cell_count, cell_shape, cells_for_stage, distance_to_cell_boundaries, half_window,
    locate_rect, stage_rects, Cell, Half, Rect,
};
pub use manifest::{manifest_hash, read_manifest, write_manifest};
pub use norms::{stage_norm_report, StageNorms};
pub use params::{
    calibrated_area_constant, defect_bound, params_from, FieldParams, Mode, AREA_FIT_LEVELS, EPS_FLOOR,
};

use std::sync::OnceLock;

use crate::dyadic::{wrap_unit, TorusPoint};
use crate::error::{Error, Result};
use crate::flow::{VelocityField, Window};
use crate::quad::adaptive_simpson;
use crate::streamfn::{psi_star_grad_raw, psi_star_loop_time, psi_value, StreamContext};

/// Support of the time profile [`chi`] in units of the stage length.
pub const CHI_SUPPORT: (f64, f64) = (0.1, 0.4);

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn bump_integral() -> f64 {
    static I: OnceLock<f64> = OnceLock::new();
    *I.get_or_init(|| adaptive_simpson(bump, -1.0, 1.0, 1e-16, 40))
}

/// Smooth time profile supported in [`CHI_SUPPORT`] with `int_0^{1/2} chi = 1`.
#[inline]
pub fn chi(t: f64) -> f64 {
    let (a, b) = CHI_SUPPORT;
    let half = 0.5 * (b - a);
    let s = (t - 0.5 * (a + b)) / half;
    if s.abs() >= 1.0 {
        return 0.0;
    }
    bump(s) / (half * bump_integral())
}

/// The factor `lambda / (w h)` of stage `n`: the block's stream function is
/// multiplied by `factor * area` so a half turn fills the half-window.
pub fn amplitude_factor(params: &FieldParams, stage: u32) -> f64 {
    let len = params.stage_length(stage);
    match params.mode {
        // local period 1, rotation budget int chi = 1 over tau^n time units
        Mode::Hoelder => 0.5 / len,
        // constant intensity, local period measured once
        Mode::Bounded => psi_star_loop_time() / len,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample {
    pub vx: f64,
    pub vy: f64,
}

impl VelocitySample {
    pub const ZERO: Self = Self { vx: 0.0, vy: 0.0 };

    pub fn as_array(self) -> [f64; 2] {
        [self.vx, self.vy]
    }
}

/// A truncated field build: parameters plus one stream context per stage.
#[derive(Debug, Clone)]
pub struct Field {
    params: FieldParams,
    contexts: Vec<Option<StreamContext>>,
    tau_partials: Vec<f64>,
    speed: Vec<f64>,
}

impl Field {
    pub fn build(params: FieldParams) -> Result<Self> {
        let contexts = (1..=params.n_stages)
            .map(|n| match params.mode {
                Mode::Hoelder => StreamContext::new(params.stage_eps(n)).map(Some),
                Mode::Bounded => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        let tau_partials = params.tau_partials();
        let speed = (1..=params.n_stages).map(|n| amplitude_factor(&params, n)).collect();
        Ok(Self { params, contexts, tau_partials, speed })
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn n_stages(&self) -> u32 {
        self.params.n_stages
    }

    /// End of the truncated time domain.
    pub fn t_end(&self) -> f64 {
        self.tau_partials[self.params.n_stages as usize]
    }

    pub fn context(&self, stage: u32) -> Option<&StreamContext> {
        self.contexts.get(stage as usize - 1).and_then(Option::as_ref)
    }

    /// Stage and half active at `t` in `[0, t_end)`.
    pub fn locate_time(&self, t: f64) -> Result<(u32, Half)> {
        let horizon = self.t_end();
        if !(t >= 0.0 && t < horizon) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        let n = self.tau_partials.partition_point(|&s| s <= t).clamp(1, self.params.n_stages as usize) as u32;
        let mid = self.tau_partials[n as usize - 1] + 0.5 * self.params.stage_length(n);
        Ok((n, if t < mid { Half::First } else { Half::Second }))
    }

    /// Start of the given stage half.
    fn half_start(&self, stage: u32, half: Half) -> f64 {
        let s = self.tau_partials[stage as usize - 1];
        match half {
            Half::First => s,
            Half::Second => s + 0.5 * self.params.stage_length(stage),
        }
    }

    /// Time profile of a stage half at absolute time `t`.
    #[inline]
    fn profile(&self, stage: u32, half: Half, t: f64) -> f64 {
        match self.params.mode {
            Mode::Bounded => 1.0,
            Mode::Hoelder => chi((t - self.half_start(stage, half)) / self.params.stage_length(stage)),
        }
    }

    /// Time-independent shape of the stage-half field at `p` in `[0, 1)^2`;
    /// the velocity is this times [`Field::profile`].
    #[inline]
    fn shape(&self, stage: u32, half: Half, p: [f64; 2]) -> [f64; 2] {
        let Some(rect) = locate_rect(stage, half, p) else {
            return [0.0, 0.0];
        };
        let [a, b] = rect.to_local(p);
        let grad = match &self.contexts[stage as usize - 1] {
            Some(ctx) => ctx.grad(a, b),
            None => psi_star_grad_raw(a, b),
        };
        let f = self.speed[stage as usize - 1];
        [-f * rect.w * grad[1], f * rect.h * grad[0]]
    }

    /// Velocity of the stage-half field at time `t` (no range check on `t`).
    #[inline]
    pub fn half_velocity(&self, stage: u32, half: Half, t: f64, p: [f64; 2]) -> [f64; 2] {
        let g = self.profile(stage, half, t);
        if g == 0.0 {
            return [0.0, 0.0];
        }
        let s = self.shape(stage, half, [wrap_unit(p[0]), wrap_unit(p[1])]);
        [g * s[0], g * s[1]]
    }

    /// True when `p` does not move during the stage half: outside every cell,
    /// or on the plateau of its cell's regularised stream function.
    pub fn is_stationary(&self, stage: u32, half: Half, p: [f64; 2]) -> bool {
        let p = [wrap_unit(p[0]), wrap_unit(p[1])];
        let Some(rect) = locate_rect(stage, half, p) else {
            return true;
        };
        match &self.contexts[stage as usize - 1] {
            Some(ctx) => {
                let [a, b] = rect.to_local(p);
                psi_value(a, b) <= 0.5 * ctx.eps()
            }
            None => false,
        }
    }

    /// Cell-local value of the unregularised `psi` for stage half, if `p` is in a cell.
    pub fn local_psi(&self, stage: u32, half: Half, p: [f64; 2]) -> Option<(Rect, f64)> {
        let p = [wrap_unit(p[0]), wrap_unit(p[1])];
        let rect = locate_rect(stage, half, p)?;
        let [a, b] = rect.to_local(p);
        Some((rect, psi_value(a, b)))
    }

    /// Forward field `v(t, p)`.
    pub fn v_eval(&self, t: f64, p: TorusPoint) -> Result<VelocitySample> {
        let (n, half) = self.locate_time(t)?;
        let v = self.half_velocity(n, half, t, [p.x1, p.x2]);
        Ok(VelocitySample { vx: v[0], vy: v[1] })
    }

    /// Backward-construction field `u(t, p) = -v(t_end - t, p)`, defined for
    /// `t` in `(0, t_end]`.
    pub fn u_eval(&self, t: f64, p: TorusPoint) -> Result<VelocitySample> {
        let horizon = self.t_end();
        if !(t > 0.0 && t <= horizon) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        let v = self.v_eval(horizon - t, p)?;
        Ok(VelocitySample { vx: -v.vx, vy: -v.vy })
    }

    /// The stage halves as integration windows, restricted to where the
    /// time profile is nonzero.
    pub fn half_windows(&self) -> Vec<Window> {
        let mut out = Vec::with_capacity(2 * self.params.n_stages as usize);
        for n in 1..=self.params.n_stages {
            let len = self.params.stage_length(n);
            for half in [Half::First, Half::Second] {
                let s = self.half_start(n, half);
                let (a, b) = match self.params.mode {
                    Mode::Hoelder => (s + CHI_SUPPORT.0 * len, s + CHI_SUPPORT.1 * len),
                    Mode::Bounded => (s, s + 0.5 * len),
                };
                out.push(Window { start: a, end: b, scale: len, key: window_key(n, half) });
            }
        }
        out
    }
}

fn window_key(stage: u32, half: Half) -> usize {
    2 * (stage as usize - 1) + half.index()
}

fn from_window_key(key: usize) -> (u32, Half) {
    let half = if key.is_multiple_of(2) { Half::First } else { Half::Second };
    ((key / 2) as u32 + 1, half)
}

impl VelocityField for Field {
    fn horizon(&self) -> f64 {
        self.t_end()
    }

    fn windows(&self) -> Vec<Window> {
        self.half_windows()
    }

    #[inline]
    fn velocity(&self, window: &Window, t: f64, p: [f64; 2]) -> [f64; 2] {
        let (n, half) = from_window_key(window.key);
        self.half_velocity(n, half, t, p)
    }

    fn is_frozen(&self, window: &Window, p: [f64; 2]) -> bool {
        let (n, half) = from_window_key(window.key);
        self.is_stationary(n, half, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hoelder(n: u32) -> Field {
        Field::build(params_from(0, 0.5, 0.2, Mode::Hoelder, n).unwrap()).unwrap()
    }

    #[test]
    fn chi_profile() {
        assert_eq!(chi(0.0), 0.0);
        assert_eq!(chi(0.45), 0.0);
        assert_eq!(chi(0.1), 0.0);
        let total = adaptive_simpson(chi, 0.0, 0.5, 1e-14, 40);
        assert!((total - 1.0).abs() < 1e-8, "{total}");
        assert!(chi(0.25) > chi(0.2) && chi(0.25) > chi(0.3));
        assert!((chi(0.2) - chi(0.3)).abs() < 1e-12);
    }

    #[test]
    fn stage_boundaries_are_quiet() {
        let f = hoelder(3);
        let t1 = f.params().tau_partial(1);
        for &p in &[[0.5, 0.3], [0.2, 0.8], [0.7, 0.9]] {
            let v = f.v_eval(t1, TorusPoint::new(p[0], p[1])).unwrap();
            assert_eq!(v, VelocitySample::ZERO);
        }
        assert!(matches!(f.v_eval(f.t_end(), TorusPoint::new(0.1, 0.1)), Err(Error::TimeOutOfRange { .. })));
        assert!(f.v_eval(-1e-3, TorusPoint::new(0.1, 0.1)).is_err());
    }

    #[test]
    fn zero_outside_condition_rows() {
        let f = hoelder(2);
        let t = 0.25 * f.params().tau;
        assert_eq!(f.v_eval(t, TorusPoint::new(0.5, 0.1)).unwrap(), VelocitySample::ZERO);
        let v = f.v_eval(t, TorusPoint::new(0.3, 0.3)).unwrap();
        assert!(v.vx.hypot(v.vy) > 0.0);
    }

    #[test]
    fn u_is_reversed_v() {
        let f = hoelder(3);
        let horizon = f.t_end();
        let p = TorusPoint::new(0.31, 0.37);
        for &t in &[0.05, 0.4, 1.1] {
            let u = f.u_eval(t, p).unwrap();
            let v = f.v_eval(horizon - t, p).unwrap();
            assert_eq!((u.vx, u.vy), (-v.vx, -v.vy));
        }
        let tail = horizon - f.params().tau_partial(1);
        assert_eq!(f.u_eval(tail, p).unwrap(), VelocitySample::ZERO);
    }

    #[test]
    fn centre_is_stationary_and_plateau_frozen() {
        let f = hoelder(2);
        let t = 0.25 * f.params().tau;
        let v = f.half_velocity(1, Half::First, t, [0.5, 0.375]);
        assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
        assert!(f.is_stationary(1, Half::First, [0.5, 0.2500001]));
        assert!(f.is_stationary(1, Half::First, [0.5, 0.1]));
        assert!(!f.is_stationary(1, Half::First, [0.5, 0.3]));
    }

    #[test]
    fn time_location() {
        let f = hoelder(4);
        assert_eq!(f.locate_time(0.0).unwrap(), (1, Half::First));
        let p = f.params();
        assert_eq!(f.locate_time(p.tau_partial(1)).unwrap(), (2, Half::First));
        assert_eq!(f.locate_time(p.tau_partial(1) - 1e-12).unwrap(), (1, Half::Second));
        assert_eq!(f.locate_time(p.tau_partial(3) + 0.6 * p.stage_length(4)).unwrap(), (4, Half::Second));
    }
}
