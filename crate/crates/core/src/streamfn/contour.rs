//! Level sets of `psi` parametrised by rays from the centre of the square.
//!
//! Super-level sets of `psi` are convex and contain the centre, so `psi`
//! decreases along every ray and each contour `{psi = r}` meets a ray exactly
//! once. By the eightfold symmetry of `psi` it suffices to work in the octant
//! `theta in [0, pi/4]`, where the ray hits the right edge `x1 = 1`.
//!
//! Points are located by their distance `delta` from that edge along the ray,
//! which keeps the distances to both nearby edges free of cancellation even
//! for contours a few `1e-10` away from the boundary.
//!
//! With `rho(theta)` the radius of the contour, the enclosed area is
//! `(1/2) int rho^2 dtheta`, and the orbit period follows from the coarea
//! formula as `T(r) = -dA/dr = int rho / (-grad psi . e_theta) dtheta`.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

/// Ray geometry in the octant `theta in [0, pi/4]`.
#[derive(Clone, Copy)]
struct Ray {
    cos: f64,
    sin: f64,
    /// Distance from the centre to the edge `x1 = 1`.
    reach: f64,
    /// Distance of the ray's edge hit from the top edge `x2 = 1`.
    top_gap: f64,
}

impl Ray {
    fn new(theta: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        Self { cos, sin, reach: 0.5 / cos, top_gap: 0.5 * (1.0 - sin / cos) }
    }

    /// `(psi, d psi / d delta)` at edge distance `delta` (`d psi / d delta >= 0`).
    fn eval(&self, delta: f64) -> (f64, f64) {
        // distances of the point to the edges x1 = 1 and x2 = 1
        let a1 = delta * self.cos;
        let a2 = self.top_gap + delta * self.sin;
        let (s, c1) = (PI * a1).sin_cos();
        let (t, c2) = (PI * a2).sin_cos();
        let sum = s + t;
        if s <= 0.0 || t <= 0.0 {
            return (0.0, 0.0);
        }
        let root = sum.sqrt();
        let psi = SQRT_2 * s * t / root;
        let inv32 = 1.0 / (sum * root);
        let dpsi_ds = SQRT_2 * t * (0.5 * s + t) * inv32;
        let dpsi_dt = SQRT_2 * s * (0.5 * t + s) * inv32;
        // moving inward increases both edge distances
        let slope = PI * (dpsi_ds * c1 * self.cos + dpsi_dt * c2 * self.sin);
        (psi, slope)
    }

    /// Edge distance of the point with `psi = level`.
    fn solve(&self, level: f64) -> Result<f64> {
        let fail = |reason: &str| Error::TraceFailure { level, reason: reason.to_string() };
        if !(level > 0.0 && level < 1.0) {
            return Err(fail("level outside (0, 1)"));
        }
        let (mut lo, mut hi) = (0.0, self.reach);
        // edge-layer guess psi ~ sqrt(2) pi a1 sqrt(sin(pi a2)), then the
        // quadratic cap near the centre
        let t0 = (PI * self.top_gap).sin().max(1e-300);
        let mut x = if level < 0.5 {
            (level / (SQRT_2 * PI * t0.sqrt() * self.cos)).min(0.5 * self.reach)
        } else {
            let rad = ((1.0 - level) * 8.0 / (3.0 * PI * PI)).sqrt();
            (self.reach - rad).max(0.5 * self.reach)
        };
        for _ in 0..200 {
            let (v, slope) = self.eval(x);
            let g = v - level;
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = if slope > 0.0 { x - g / slope } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(next);
            }
            x = next;
        }
        Err(fail("ray root did not converge"))
    }

    fn point(&self, delta: f64) -> [f64; 2] {
        [1.0 - delta * self.cos, 1.0 - self.top_gap - delta * self.sin]
    }
}

/// `8 * int_0^{pi/4} f(ray, delta) dtheta` where `delta` solves `psi = level` on the ray.
fn octant_integral<F: Fn(&Ray, f64) -> f64>(level: f64, tol: f64, f: F) -> Result<f64> {
    let failure = std::cell::RefCell::new(None::<Error>);
    let value = adaptive_simpson(
        |theta| {
            let ray = Ray::new(theta);
            match ray.solve(level) {
                Ok(delta) => f(&ray, delta),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        FRAC_PI_4,
        tol,
        30,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(8.0 * value),
    }
}

/// Orbit period `T_psi(r)` of `grad_perp psi` on the contour `{psi = r}`.
pub fn travel_time(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::TraceFailure { level: r, reason: "level outside (0, 1)".into() });
    }
    octant_integral(r, 1e-13, |ray, delta| (ray.reach - delta) / ray.eval(delta).1)
}

/// Lebesgue measure of `{x in Q : psi(x) < eps}`.
pub fn sublevel_area(eps: f64) -> Result<f64> {
    if eps <= 0.0 {
        return Ok(0.0);
    }
    if eps >= 1.0 {
        return Ok(1.0);
    }
    let inside = octant_integral(eps, 1e-14, |ray, delta| 0.5 * (ray.reach - delta).powi(2))?;
    Ok(1.0 - inside)
}

/// Closed polygon through `8 * per_octant` points of `{psi = level}`,
/// counter-clockwise starting on the ray `theta = 0`.
pub fn contour_polygon(level: f64, per_octant: usize) -> Result<Vec<[f64; 2]>> {
    let n = per_octant.max(1);
    let mut octant = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let theta = FRAC_PI_4 * j as f64 / n as f64;
        let ray = Ray::new(theta);
        octant.push(ray.point(ray.solve(level)?));
    }
    // unfold by the symmetries of the square, centred at (1/2, 1/2)
    let mut pts = Vec::with_capacity(8 * n);
    let to_c = |p: [f64; 2]| [p[0] - 0.5, p[1] - 0.5];
    let from_c = |u: f64, w: f64| [0.5 + u, 0.5 + w];
    for k in 0..8 {
        for j in 0..n {
            // odd octants run backwards through the reflected samples
            let [u, w] = if k % 2 == 0 { to_c(octant[j]) } else { to_c(octant[n - j]) };
            let q = match k {
                0 => from_c(u, w),
                1 => from_c(w, u),
                2 => from_c(-w, u),
                3 => from_c(-u, w),
                4 => from_c(-u, -w),
                5 => from_c(-w, -u),
                6 => from_c(w, -u),
                _ => from_c(u, -w),
            };
            pts.push(q);
        }
    }
    Ok(pts)
}

/// Discrete convexity: all cross products of consecutive edges share a sign.
pub fn is_convex_polygon(pts: &[[f64; 2]]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let c = pts[(i + 2) % n];
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross == 0.0 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    sign != 0.0
}

/// Trapezoid line integral of `1 / |grad f|` around a closed polygon.
pub fn line_travel_time<G: Fn(f64, f64) -> [f64; 2]>(pts: &[[f64; 2]], grad: G) -> f64 {
    let n = pts.len();
    let inv: Vec<f64> = pts
        .iter()
        .map(|p| {
            let g = grad(p[0], p[1]);
            1.0 / g[0].hypot(g[1])
        })
        .collect();
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let len = (pts[j][0] - pts[i][0]).hypot(pts[j][1] - pts[i][1]);
            0.5 * len * (inv[i] + inv[j])
        })
        .sum()
}
