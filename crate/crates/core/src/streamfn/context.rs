use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use super::contour::{contour_polygon, line_travel_time, travel_time};
use super::{psi_value_grad, rho_unit, UnitSquarePoint};
use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// Orbit period of `grad_perp psi` at the centre, from the Hessian
/// `psi ~ 1 - (3 pi^2 / 8) |x - c|^2`.
pub const CENTER_PERIOD: f64 = 8.0 / (3.0 * PI);

/// Smallest regularisation parameter served by the shared table.
pub const SHARED_TABLE_MIN_EPS: f64 = 1e-6;

const SHARED_KNOTS: usize = 1024;

/// `T_psi` and its primitive sampled on a log-spaced grid `r_lo .. 1`.
///
/// Between knots `T_psi` is a cubic Hermite interpolant in `r`; the
/// cumulative integral is its exact primitive, so the derivative of
/// [`TravelTable::cumulative`] is exactly [`TravelTable::period`].
#[derive(Debug, Clone)]
pub struct TravelTable {
    log_lo: f64,
    log_step: f64,
    r: Vec<f64>,
    period: Vec<f64>,
    slope: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TravelTable {
    /// Builds a table with `knots` samples on `[r_lo, 1]`.
    pub fn build(r_lo: f64, knots: usize) -> Result<Self> {
        if !(r_lo > 0.0 && r_lo < 0.5) {
            return Err(Error::InvalidParam { name: "r_lo", reason: format!("{r_lo} not in (0, 1/2)") });
        }
        if knots < 8 {
            return Err(Error::InvalidParam { name: "knots", reason: "need at least 8 knots".into() });
        }
        let log_lo = r_lo.ln();
        let log_step = -log_lo / (knots - 1) as f64;
        let r: Vec<f64> = (0..knots)
            .map(|i| if i + 1 == knots { 1.0 } else { (log_lo + log_step * i as f64).exp() })
            .collect();
        let mut period = r[..knots - 1].par_iter().map(|&ri| travel_time(ri)).collect::<Result<Vec<_>>>()?;
        period.push(CENTER_PERIOD);

        let slope = log_grid_slopes(&r, &period, log_step);

        // int_0^{r_lo} T via r = r_lo u^3, smooth in u since T(r) ~ T0 + c r^{1/3}
        let head_err = std::cell::RefCell::new(None);
        let head = gauss_legendre(
            |u| match travel_time(r_lo * u * u * u) {
                Ok(t) => 3.0 * r_lo * u * u * t,
                Err(e) => {
                    head_err.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            0.0,
            1.0,
            4,
        );
        if let Some(e) = head_err.into_inner() {
            return Err(e);
        }
        let n = knots;
        let mut cumulative = Vec::with_capacity(n);
        cumulative.push(head);
        for i in 0..n - 1 {
            let d = r[i + 1] - r[i];
            let inc = d * (0.5 * (period[i] + period[i + 1]) + d * (slope[i] - slope[i + 1]) / 12.0);
            cumulative.push(cumulative[i] + inc);
        }
        Ok(Self { log_lo, log_step, r, period, slope, cumulative })
    }

    /// Process-wide table covering every `eps >= SHARED_TABLE_MIN_EPS`.
    pub fn shared() -> Arc<TravelTable> {
        shared_cell()
            .get_or_init(|| {
                Arc::new(
                    TravelTable::build(SHARED_TABLE_MIN_EPS / 4.0, SHARED_KNOTS)
                        .expect("travel-time table over a fixed valid range"),
                )
            })
            .clone()
    }

    /// Makes `table` the process-wide table if none has been built yet.
    /// Returns false when a shared table already exists.
    pub fn install_shared(table: TravelTable) -> bool {
        shared_cell().set(Arc::new(table)).is_ok()
    }

    /// Reads a table written by [`TravelTable::write_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let err = |reason: String| Error::Parse { what: "travel table", reason };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("r,T_psi,cumulative") {
            return Err(err("missing `r,T_psi,cumulative` header".into()));
        }
        let (mut r, mut period, mut cumulative) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(format!("line {}: not three numbers", i + 2)))?;
            if cols.len() != 3 {
                return Err(err(format!("line {}: expected 3 columns", i + 2)));
            }
            r.push(cols[0]);
            period.push(cols[1]);
            cumulative.push(cols[2]);
        }
        let n = r.len();
        if n < 8 || r[n - 1] != 1.0 || r[0].is_nan() || r[0] <= 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(err("knots must increase from a positive value to 1".into()));
        }
        let log_lo = r[0].ln();
        let log_step = -log_lo / (n - 1) as f64;
        for (i, ri) in r.iter().enumerate() {
            if (ri.ln() - (log_lo + log_step * i as f64)).abs() > 1e-9 {
                return Err(err(format!("knot {i} is off the logarithmic grid")));
            }
        }
        let slope = log_grid_slopes(&r, &period, log_step);
        Ok(Self { log_lo, log_step, r, period, slope, cumulative })
    }

    pub fn r_lo(&self) -> f64 {
        self.r[0]
    }

    pub fn knots(&self) -> &[f64] {
        &self.r
    }

    pub fn periods(&self) -> &[f64] {
        &self.period
    }

    pub fn cumulatives(&self) -> &[f64] {
        &self.cumulative
    }

    #[inline]
    fn locate(&self, r: f64) -> (usize, f64, f64) {
        let n = self.r.len();
        let r = r.clamp(self.r[0], 1.0);
        let mut i = ((r.ln() - self.log_lo) / self.log_step) as usize;
        i = i.min(n - 2);
        // guard against rounding in the log
        while i > 0 && r < self.r[i] {
            i -= 1;
        }
        while i + 2 < n && r >= self.r[i + 1] {
            i += 1;
        }
        let d = self.r[i + 1] - self.r[i];
        (i, d, (r - self.r[i]) / d)
    }

    /// Interpolated `T_psi(r)` for `r` in `[r_lo, 1]` (clamped outside).
    #[inline]
    pub fn period(&self, r: f64) -> f64 {
        let (i, d, s) = self.locate(r);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.period[i]
            + (s3 - 2.0 * s2 + s) * d * self.slope[i]
            + (3.0 * s2 - 2.0 * s3) * self.period[i + 1]
            + (s3 - s2) * d * self.slope[i + 1]
    }

    /// `int_0^r T_psi` for `r` in `[r_lo, 1]` (clamped outside).
    #[inline]
    pub fn cumulative(&self, r: f64) -> f64 {
        let (i, d, s) = self.locate(r);
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        self.cumulative[i]
            + d * ((0.5 * s4 - s3 + s) * self.period[i]
                + (0.25 * s4 - 2.0 * s3 / 3.0 + 0.5 * s2) * d * self.slope[i]
                + (s3 - 0.5 * s4) * self.period[i + 1]
                + (0.25 * s4 - s3 / 3.0) * d * self.slope[i + 1])
    }

    /// The `r` with `cumulative(r) = value`, by bisection on the knots then Newton.
    pub fn invert_cumulative(&self, value: f64) -> Option<f64> {
        let n = self.r.len();
        if !(value >= self.cumulative[0] && value <= self.cumulative[n - 1]) {
            return None;
        }
        let i = self.cumulative.partition_point(|&c| c <= value).clamp(1, n - 1) - 1;
        let (mut lo, mut hi) = (self.r[i], self.r[i + 1]);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..100 {
            let g = self.cumulative(x) - value;
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - g / self.period(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-16 * x {
                return Some(next);
            }
            x = next;
        }
        Some(x)
    }

    /// CSV with columns `r,T_psi,cumulative`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,T_psi,cumulative")?;
        for ((r, t), c) in self.r.iter().zip(&self.period).zip(&self.cumulative) {
            writeln!(out, "{r:.17e},{t:.17e},{c:.17e}")?;
        }
        Ok(())
    }
}

fn shared_cell() -> &'static OnceLock<Arc<TravelTable>> {
    static SHARED: OnceLock<Arc<TravelTable>> = OnceLock::new();
    &SHARED
}

/// `dT/dr` at the knots from differences on the uniform log grid (fourth
/// order inside, second order at the ends).
fn log_grid_slopes(r: &[f64], period: &[f64], h: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|i| {
            let dl = if i >= 2 && i + 2 < n {
                (period[i - 2] - 8.0 * period[i - 1] + 8.0 * period[i + 1] - period[i + 2]) / (12.0 * h)
            } else if i == 0 {
                (-3.0 * period[0] + 4.0 * period[1] - period[2]) / (2.0 * h)
            } else if i + 1 == n {
                (3.0 * period[n - 1] - 4.0 * period[n - 2] + period[n - 3]) / (2.0 * h)
            } else {
                (period[i + 1] - period[i - 1]) / (2.0 * h)
            };
            dl / r[i]
        })
        .collect()
}

/// The regularised stream function `psi_eps(x) = int_0^{rho_eps(psi(x))} T_psi`.
#[derive(Debug, Clone)]
pub struct StreamContext {
    eps: f64,
    table: Arc<TravelTable>,
    r_eps: f64,
    plateau: f64,
    max_value: f64,
}

impl StreamContext {
    /// Uses the shared table when it covers `eps`, otherwise builds one.
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 0.5) {
            return Err(Error::InvalidParam { name: "eps", reason: format!("{eps} not in (0, 1/2]") });
        }
        let table = if eps >= SHARED_TABLE_MIN_EPS {
            TravelTable::shared()
        } else {
            Arc::new(TravelTable::build(eps / 4.0, SHARED_KNOTS)?)
        };
        Self::with_table(eps, table)
    }

    pub fn with_table(eps: f64, table: Arc<TravelTable>) -> Result<Self> {
        if eps / 4.0 < table.r_lo() * (1.0 - 1e-12) {
            return Err(Error::InvalidParam {
                name: "eps",
                reason: format!("table starts at {} but eps/4 = {}", table.r_lo(), eps / 4.0),
            });
        }
        let r_eps = table.cumulative(eps);
        let plateau = table.cumulative(0.5 * eps);
        let max_value = table.cumulative(1.0);
        Ok(Self { eps, table, r_eps, plateau, max_value })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `r_eps = int_0^eps T_psi`: above it every contour has unit period.
    pub fn r_eps(&self) -> f64 {
        self.r_eps
    }

    /// Constant value of `psi_eps` on `{psi <= eps/2}`.
    pub fn plateau(&self) -> f64 {
        self.plateau
    }

    /// `psi_eps` at the centre, its maximum.
    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    pub fn table(&self) -> &TravelTable {
        &self.table
    }

    /// `psi_eps` on the closed square (the plateau value on the boundary).
    #[inline]
    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        let psi = super::psi_value(x1, x2);
        let rho = self.eps * rho_unit(psi / self.eps).0;
        self.table.cumulative(rho)
    }

    /// `grad psi_eps = T_psi(rho_eps(psi)) rho_eps'(psi) grad psi`, zero on the plateau.
    #[inline]
    pub fn grad(&self, x1: f64, x2: f64) -> [f64; 2] {
        let (psi, g) = psi_value_grad(x1, x2);
        if psi <= 0.5 * self.eps {
            return [0.0, 0.0];
        }
        let (rho, drho) = rho_unit(psi / self.eps);
        let f = self.table.period(self.eps * rho) * drho;
        [f * g[0], f * g[1]]
    }

    /// `(psi, grad psi_eps)` in one pass; `psi` is the unregularised value.
    #[inline]
    pub fn psi_and_grad(&self, x1: f64, x2: f64) -> (f64, [f64; 2]) {
        let (psi, g) = psi_value_grad(x1, x2);
        if psi <= 0.5 * self.eps {
            return (psi, [0.0, 0.0]);
        }
        let (rho, drho) = rho_unit(psi / self.eps);
        let f = self.table.period(self.eps * rho) * drho;
        (psi, [f * g[0], f * g[1]])
    }

    pub fn psi_eps_eval(&self, p: UnitSquarePoint) -> f64 {
        self.value(p.x1, p.x2)
    }

    pub fn psi_eps_grad(&self, p: UnitSquarePoint) -> [f64; 2] {
        self.grad(p.x1, p.x2)
    }

    /// The `psi` level whose contour is `{psi_eps = level}`, for levels above the plateau.
    pub fn psi_level_of(&self, level: f64) -> Result<f64> {
        let fail = |reason: String| Error::TraceFailure { level, reason };
        if level <= self.plateau {
            return Err(fail(format!("level is at or below the plateau value {}", self.plateau)));
        }
        if level >= self.max_value {
            return Err(fail(format!("level is at or above the maximum {}", self.max_value)));
        }
        // psi_eps = F(rho_eps(psi)); invert F, then rho_eps (identity above eps)
        let rho = self.table.invert_cumulative(level).ok_or_else(|| fail("cumulative inversion failed".into()))?;
        if rho >= self.eps {
            return Ok(rho);
        }
        let (mut lo, mut hi) = (0.5 * self.eps, self.eps);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eps * rho_unit(mid / self.eps).0 < rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Orbit period of `grad_perp psi_eps` on `{psi_eps = level}`, measured as
    /// the line integral of `1 / |grad psi_eps|` along the traced contour.
    pub fn verify_uniform_travel(&self, level: f64) -> Result<f64> {
        let psi_level = self.psi_level_of(level)?;
        let pts = contour_polygon(psi_level, 4096)?;
        Ok(line_travel_time(&pts, |a, b| self.grad(a, b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> Arc<TravelTable> {
        Arc::new(TravelTable::build(1e-3, 512).unwrap())
    }

    #[test]
    fn table_invariants() {
        let t = small_table();
        assert!(t.periods().iter().all(|&v| v.is_finite() && v > 0.0));
        assert!(t.cumulatives().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn interpolant_matches_direct_quadrature_between_knots() {
        let t = small_table();
        for &r in &[0.0013, 0.0071, 0.042, 0.31, 0.77, 0.9993] {
            let direct = travel_time(r).unwrap();
            assert!((t.period(r) - direct).abs() / direct < 1e-7, "r={r}");
        }
    }

    #[test]
    fn csv_round_trip_reproduces_the_table() {
        let t = TravelTable::build(1e-3, 64).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = TravelTable::from_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.knots(), t.knots());
        assert_eq!(back.cumulatives(), t.cumulatives());
        for &r in &[0.0011, 0.02, 0.5, 0.97] {
            assert!((back.period(r) - t.period(r)).abs() < 1e-14);
            assert!((back.cumulative(r) - t.cumulative(r)).abs() < 1e-14);
        }
        assert!(TravelTable::from_csv("r,T_psi,cumulative\n0.5,1,1\n").is_err());
        assert!(TravelTable::from_csv("x\n").is_err());
    }

    #[test]
    fn cumulative_derivative_is_period() {
        let t = small_table();
        for &r in &[0.002, 0.05, 0.5, 0.95] {
            let h = 1e-6 * r;
            let fd = (t.cumulative(r + h) - t.cumulative(r - h)) / (2.0 * h);
            assert!((fd - t.period(r)).abs() / t.period(r) < 1e-6);
        }
    }

    #[test]
    fn inversion_round_trips() {
        let t = small_table();
        for &r in &[0.0011, 0.02, 0.6, 0.999] {
            let back = t.invert_cumulative(t.cumulative(r)).unwrap();
            assert!((back - r).abs() < 1e-12);
        }
        assert!(t.invert_cumulative(-1.0).is_none());
    }

    #[test]
    fn plateau_and_level_compatibility() {
        let ctx = StreamContext::with_table(0.01, small_table()).unwrap();
        // psi(x) = eps/4 lies on the plateau
        let x = 0.5;
        let mut lo = 1e-9;
        let mut hi = 0.5;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if crate::streamfn::psi_value(mid, x) < 0.0025 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((ctx.value(lo, x) - ctx.plateau()).abs() < 1e-15);
        assert!((ctx.plateau() - ctx.table().cumulative(0.005)).abs() < 1e-15);
        assert_eq!(ctx.grad(lo, x), [0.0, 0.0]);
        // equal psi above eps gives equal psi_eps
        let a = ctx.value(0.3, 0.6);
        let b = ctx.value(0.6, 0.3);
        assert!((a - b).abs() < 1e-15);
        assert!(ctx.value(0.5, 0.5) >= ctx.value(0.49, 0.5));
        assert!((ctx.value(0.5, 0.5) - ctx.max_value()).abs() < 1e-12);
    }

    #[test]
    fn rejects_eps_below_table() {
        assert!(StreamContext::with_table(1e-4, small_table()).is_err());
        assert!(StreamContext::new(0.0).is_err());
    }

    #[test]
    fn unit_period_above_r_eps() {
        let ctx = StreamContext::with_table(0.01, small_table()).unwrap();
        let mid = 0.5 * (ctx.r_eps() + ctx.max_value());
        let t = ctx.verify_uniform_travel(mid).unwrap();
        assert!((t - 1.0).abs() < 1e-3, "{t}");
        assert!(ctx.verify_uniform_travel(ctx.plateau()).is_err());
    }
}
