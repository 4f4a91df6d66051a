//! Cellular stream functions on the unit square `Q = (0, 1)^2`.
//!
//! * [`psi_eval`]: the smooth cellular stream function
//!   `psi(x) = sqrt(2) sin(pi x1) sin(pi x2) / sqrt(sin(pi x1) + sin(pi x2))`,
//!   equal to 1 at the centre and vanishing on the boundary, with convex
//!   super-level sets.
//! * [`StreamContext`]: the reparametrisation `psi_eps = F(rho_eps(psi))`
//!   where `F' = T_psi` is the orbit period of `grad_perp psi`, so that every
//!   orbit of `grad_perp psi_eps` outside a boundary layer has period one.
//! * [`psi_star_eval`]: the piecewise-quadratic block with square contours
//!   used by the bounded construction.
//!
//! All perpendicular gradients use the convention `grad_perp f = (-d2 f, d1 f)`.

mod context;
mod contour;

pub use context::{StreamContext, TravelTable, SHARED_TABLE_MIN_EPS};
pub use contour::{contour_polygon, is_convex_polygon, line_travel_time, sublevel_area, travel_time};

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// A point strictly inside the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSquarePoint {
    pub x1: f64,
    pub x2: f64,
}

impl UnitSquarePoint {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        let inside = |x: f64| x > 0.0 && x < 1.0;
        if inside(x1) && inside(x2) {
            Ok(Self { x1, x2 })
        } else {
            Err(Error::DomainError { x1, x2 })
        }
    }
}

/// `psi` on the closed square; zero on the boundary by continuity.
#[inline]
pub fn psi_value(x1: f64, x2: f64) -> f64 {
    if x1 <= 0.0 || x1 >= 1.0 || x2 <= 0.0 || x2 >= 1.0 {
        return 0.0;
    }
    let s = (PI * x1).sin();
    let t = (PI * x2).sin();
    if s <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    SQRT_2 * (s * t) / (s + t).sqrt()
}

/// `(psi, d1 psi, d2 psi)` at an interior point.
#[inline]
pub fn psi_value_grad(x1: f64, x2: f64) -> (f64, [f64; 2]) {
    let (s, c1) = (PI * x1).sin_cos();
    let (t, c2) = (PI * x2).sin_cos();
    let sum = s + t;
    if s <= 0.0 || t <= 0.0 || sum <= 0.0 {
        return (0.0, [0.0, 0.0]);
    }
    let root = sum.sqrt();
    let psi = SQRT_2 * (s * t) / root;
    let inv32 = 1.0 / (sum * root);
    let dpsi_ds = SQRT_2 * t * (0.5 * s + t) * inv32;
    let dpsi_dt = SQRT_2 * s * (0.5 * t + s) * inv32;
    (psi, [dpsi_ds * PI * c1, dpsi_dt * PI * c2])
}

pub fn psi_eval(p: UnitSquarePoint) -> f64 {
    psi_value(p.x1, p.x2)
}

pub fn psi_grad(p: UnitSquarePoint) -> [f64; 2] {
    psi_value_grad(p.x1, p.x2).1
}

/// Smooth step on `[0, 1]`: 0 below, 1 above, `C^inf` in between.
fn smooth_step(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0);
    }
    let h = |x: f64| (-1.0 / x).exp();
    let (a, b) = (h(s), h(1.0 - s));
    let (da, db) = (a / (s * s), b / ((1.0 - s) * (1.0 - s)));
    let den = a + b;
    let value = a / den;
    // d/ds [a / (a + b(1-s))] with b'(1-s) = -db
    let deriv = (da * b + a * db) / (den * den);
    (value, deriv)
}

/// The unit-scale clamp `rho`: `1/2` below `1/2`, identity above 1, and the
/// blend `1/2 + beta(x) (x - 1/2)` in between with `beta` a `C^inf` step
/// from 0 to 1 on `[1/2, 1]`. Returns `(rho, rho')`.
pub fn rho_unit(x: f64) -> (f64, f64) {
    if x <= 0.5 {
        return (0.5, 0.0);
    }
    if x >= 1.0 {
        return (x, 1.0);
    }
    let (beta, dbeta_ds) = smooth_step(2.0 * x - 1.0);
    let u = x - 0.5;
    (0.5 + beta * u, beta + 2.0 * dbeta_ds * u)
}

/// `rho_eps(r) = eps * rho(r / eps)`.
pub fn rho_eps(r: f64, eps: f64) -> f64 {
    eps * rho_unit(r / eps).0
}

/// Derivative of [`rho_eps`] in `r`.
pub fn rho_eps_deriv(r: f64, eps: f64) -> f64 {
    rho_unit(r / eps).1
}

/// Square-contour block `-8 max(|x1 - 1/2|^2, |x2 - 1/2|^2)`.
#[inline]
pub fn psi_star_value(x1: f64, x2: f64) -> f64 {
    let u = x1 - 0.5;
    let w = x2 - 0.5;
    -8.0 * (u * u).max(w * w)
}

/// Gradient of [`psi_star_value`]; on the diagonals `|u| = |w|` the two
/// one-sided gradients are averaged.
#[inline]
pub fn psi_star_grad_raw(x1: f64, x2: f64) -> [f64; 2] {
    let u = x1 - 0.5;
    let w = x2 - 0.5;
    let (au, aw) = (u.abs(), w.abs());
    if au > aw {
        [-16.0 * u, 0.0]
    } else if aw > au {
        [0.0, -16.0 * w]
    } else {
        [-8.0 * u, -8.0 * w]
    }
}

pub fn psi_star_eval(p: UnitSquarePoint) -> f64 {
    psi_star_value(p.x1, p.x2)
}

pub fn psi_star_grad(p: UnitSquarePoint) -> [f64; 2] {
    psi_star_grad_raw(p.x1, p.x2)
}

/// Orbit period of `grad_perp psi_star` on any of its square contours.
///
/// Midpoint-rule line integral of `1 / |grad psi_star|` along the four sides
/// of the contour of half-side `1/4`; every contour gives the same value.
pub fn psi_star_loop_time() -> f64 {
    let s: f64 = 0.25;
    let corners = [[0.5 + s, 0.5 + s], [0.5 - s, 0.5 + s], [0.5 - s, 0.5 - s], [0.5 + s, 0.5 - s]];
    let n = 64;
    let mut total = 0.0;
    for k in 0..4 {
        let a = corners[k];
        let b = corners[(k + 1) % 4];
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        for j in 0..n {
            let f = (j as f64 + 0.5) / n as f64;
            let g = psi_star_grad_raw(a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]));
            total += len / n as f64 / g[0].hypot(g[1]);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x1: f64, x2: f64) -> UnitSquarePoint {
        UnitSquarePoint::new(x1, x2).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert!((psi_eval(p(0.5, 0.5)) - 1.0).abs() < 1e-15);
        let diag = (PI / 4.0).sin().powf(1.5);
        assert!((psi_eval(p(0.25, 0.25)) - diag).abs() < 1e-15);
        assert!((diag - 0.594_604).abs() < 1e-6);
        assert!(psi_eval(p(1e-6, 0.5)) < 1e-5);
    }

    #[test]
    fn psi_boundary_is_zero_and_domain_checked() {
        assert_eq!(psi_value(0.0, 0.3), 0.0);
        assert_eq!(psi_value(0.3, 1.0), 0.0);
        assert!(matches!(UnitSquarePoint::new(0.0, 0.5), Err(Error::DomainError { .. })));
        assert!(UnitSquarePoint::new(0.5, 1.0).is_err());
    }

    #[test]
    fn psi_symmetries() {
        for &(a, b) in &[(0.1, 0.7), (0.33, 0.91), (0.5, 0.02)] {
            let v = psi_value(a, b);
            assert_eq!(v, psi_value(b, a));
            assert!((v - psi_value(1.0 - a, 1.0 - b)).abs() < 1e-15);
            assert!((v - psi_value(1.0 - a, b)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_vanishes_at_centre_and_is_diagonal_symmetric() {
        let g = psi_grad(p(0.5, 0.5));
        assert!(g[0].abs() < 1e-15 && g[1].abs() < 1e-15);
        let g = psi_grad(p(0.25, 0.25));
        assert!((g[0] - g[1]).abs() < 1e-14);
        // finite-difference oracle
        let h = 1e-6;
        let fd = (psi_value(0.25 + h, 0.25) - psi_value(0.25 - h, 0.25)) / (2.0 * h);
        assert!((fd - g[0]).abs() < 1e-8);
    }

    #[test]
    fn rho_clamps_and_blends() {
        let eps = 0.01;
        assert!((rho_eps(2.0 * eps, eps) - 2.0 * eps).abs() < 1e-18);
        assert!((rho_eps(eps / 4.0, eps) - eps / 2.0).abs() < 1e-18);
        for i in 0..=200 {
            let r = eps * (0.3 + 0.005 * i as f64);
            assert!(rho_eps(r, eps) >= eps / 2.0);
            assert!(rho_eps_deriv(r, eps) >= 0.0);
        }
    }

    #[test]
    fn rho_derivative_continuous_at_joins() {
        let eps = 1e-3;
        for &join in &[0.5, 1.0] {
            let r = join * eps;
            let h = 1e-9 * eps;
            let left = rho_eps_deriv(r - h, eps);
            let right = rho_eps_deriv(r + h, eps);
            assert!((left - right).abs() < 1e-8, "join {join}: {left} vs {right}");
        }
        // one-sided difference quotients agree with the analytic derivative
        let x = 0.73;
        let h = 1e-6;
        let fd = (rho_unit(x + h).0 - rho_unit(x - h).0) / (2.0 * h);
        assert!((fd - rho_unit(x).1).abs() < 1e-8);
    }

    #[test]
    fn psi_star_examples() {
        assert_eq!(psi_star_eval(p(0.5, 0.5)), 0.0);
        assert_eq!(psi_star_eval(p(0.75, 0.5)), -0.5);
        assert_eq!(psi_star_grad(p(0.75, 0.5)), [-4.0, 0.0]);
        assert_eq!(psi_star_grad(p(0.5, 0.25)), [0.0, 4.0]);
        assert_eq!(psi_star_grad(p(0.75, 0.75)), [-2.0, -2.0]);
        assert!((psi_star_value(0.2, 0.9) - psi_star_value(0.8, 0.1)).abs() < 1e-15);
    }

    #[test]
    fn psi_star_loop_is_half_time_unit() {
        assert!((psi_star_loop_time() - 0.5).abs() < 1e-12);
    }
}
