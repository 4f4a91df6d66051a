use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::streamfn::sublevel_area;

/// Lower bound applied to every stage regularisation `eps_n`.
pub const EPS_FLOOR: f64 = 1e-6;

/// Safety factor on the fitted sublevel-area constant.
const AREA_SAFETY: f64 = 2.0;

/// Levels used to fit `|{psi < eps}| <= C eps^{2/3}`.
pub const AREA_FIT_LEVELS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Square-contour blocks, `tau = 1/2`, bounded but only BV in space.
    Bounded,
    /// Travel-time normalised smooth blocks, `C^k` in time and `C^alpha` in space.
    Hoelder,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Bounded => "bounded",
            Mode::Hoelder => "hoelder",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bounded" => Ok(Mode::Bounded),
            "hoelder" | "holder" | "hölder" => Ok(Mode::Hoelder),
            other => Err(Error::Parse { what: "mode", reason: format!("unknown mode `{other}`") }),
        }
    }
}

/// Parameters of a truncated field build.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    pub mode: Mode,
    pub k: u32,
    pub alpha: f64,
    pub delta: f64,
    pub tau: f64,
    pub kappa: f64,
    /// Zero in bounded mode, where no regularisation is used.
    pub eps_star: f64,
    /// Calibrated sublevel-area constant (already including the safety factor).
    pub c_area: f64,
    pub n_stages: u32,
}

/// `2 * max_eps |{psi < eps}| / eps^{2/3}` over [`AREA_FIT_LEVELS`].
pub fn calibrated_area_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let fit = AREA_FIT_LEVELS
            .iter()
            .map(|&e| sublevel_area(e).expect("sublevel area on a fixed valid level") / e.powf(2.0 / 3.0))
            .fold(0.0, f64::max);
        AREA_SAFETY * fit
    })
}

/// Builds parameters for the given regularity and defect budget.
pub fn params_from(k: u32, alpha: f64, delta: f64, mode: Mode, n_stages: u32) -> Result<FieldParams> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParam { name: "alpha", reason: format!("{alpha} not in (0, 1)") });
    }
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::InvalidParam {
            name: "delta",
            reason: format!("{delta} not in (0, 1/4); the obstruction argument needs delta < 1/4"),
        });
    }
    if n_stages == 0 || n_stages > 24 {
        return Err(Error::InvalidParam { name: "n_stages", reason: format!("{n_stages} not in 1..=24") });
    }
    let c_area = calibrated_area_constant();
    let (tau, kappa, eps_star) = match mode {
        Mode::Bounded => (0.5, 0.5, 0.0),
        Mode::Hoelder => {
            let e = (alpha - 1.0) / 3.0;
            let tau = 2f64.powf(e / (1.0 + k as f64));
            let kappa = 2f64.powf(e / alpha);
            let q = kappa.powf(2.0 / 3.0);
            let series = q / (1.0 - q);
            let eps_star = (delta / (c_area * series)).powf(1.5);
            (tau, kappa, eps_star)
        }
    };
    Ok(FieldParams { mode, k, alpha, delta, tau, kappa, eps_star, c_area, n_stages })
}

impl FieldParams {
    /// `tau_n = sum_{q <= n} tau^q`.
    pub fn tau_partial(&self, n: u32) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.tau * (1.0 - self.tau.powi(n as i32)) / (1.0 - self.tau)
    }

    /// All partial sums `tau_0 .. tau_{n_stages}`.
    pub fn tau_partials(&self) -> Vec<f64> {
        (0..=self.n_stages).map(|n| self.tau_partial(n)).collect()
    }

    /// Untruncated horizon `T = tau / (1 - tau)`.
    pub fn horizon(&self) -> f64 {
        self.tau / (1.0 - self.tau)
    }

    /// End of the truncated domain, `tau_{n_stages}`.
    pub fn truncated_horizon(&self) -> f64 {
        self.tau_partial(self.n_stages)
    }

    /// Duration `tau^n` of stage `n`.
    pub fn stage_length(&self, n: u32) -> f64 {
        self.tau.powi(n as i32)
    }

    /// `eps_n = max(eps_star kappa^n, EPS_FLOOR)`; zero in bounded mode.
    pub fn stage_eps(&self, n: u32) -> f64 {
        match self.mode {
            Mode::Bounded => 0.0,
            Mode::Hoelder => (self.eps_star * self.kappa.powi(n as i32)).max(EPS_FLOOR),
        }
    }

    pub fn with_eps_star(&self, eps_star: f64) -> Self {
        Self { eps_star, ..self.clone() }
    }

    pub fn with_stages(&self, n_stages: u32) -> Self {
        Self { n_stages, ..self.clone() }
    }
}

/// Upper bound `C eps_star^{2/3} sum_{n >= 1} kappa^{2n/3}` on the measure of
/// starting points whose digits the flow fails to realise.
pub fn defect_bound(p: &FieldParams) -> f64 {
    match p.mode {
        Mode::Bounded => 0.0,
        Mode::Hoelder => {
            let q = p.kappa.powf(2.0 / 3.0);
            p.c_area * p.eps_star.powf(2.0 / 3.0) * q / (1.0 - q)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hoelder_exponents() {
        let p = params_from(0, 0.5, 0.2, Mode::Hoelder, 6).unwrap();
        assert!((p.tau - 2f64.powf(-1.0 / 6.0)).abs() < 1e-15);
        assert!((p.tau - 0.890_899).abs() < 1e-6);
        assert!((p.kappa - 0.793_701).abs() < 1e-6);
        let lhs = p.tau.powi(1 + p.k as i32);
        assert!((lhs / p.kappa.powf(p.alpha) - 1.0).abs() < 1e-12);
        assert!((lhs / 2f64.powf(-1.0 / 6.0) - 1.0).abs() < 1e-12);

        let p1 = params_from(1, 0.5, 0.2, Mode::Hoelder, 6).unwrap();
        assert!((p1.tau - 0.943_874).abs() < 1e-6);
        assert_eq!(p1.kappa, p.kappa);
    }

    #[test]
    fn bounded_mode() {
        let p = params_from(0, 0.5, 0.2, Mode::Bounded, 6).unwrap();
        assert_eq!(p.tau, 0.5);
        assert_eq!(p.horizon(), 1.0);
        assert_eq!(defect_bound(&p), 0.0);
    }

    #[test]
    fn rejects_large_delta() {
        let e = params_from(0, 0.5, 0.3, Mode::Hoelder, 6).unwrap_err();
        assert!(e.to_string().contains("1/4"));
        assert!(params_from(0, 1.0, 0.1, Mode::Hoelder, 6).is_err());
    }

    #[test]
    fn partial_sums_increase_to_horizon() {
        let p = params_from(0, 0.5, 0.2, Mode::Hoelder, 12).unwrap();
        let t = p.tau_partials();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(*t.last().unwrap() < p.horizon());
        let direct: f64 = (1..=12).map(|q| p.tau.powi(q)).sum();
        assert!((direct - p.truncated_horizon()).abs() < 1e-14);
    }

    #[test]
    fn defect_bound_scaling() {
        let p = params_from(0, 0.5, 0.2, Mode::Hoelder, 6).unwrap();
        let b = defect_bound(&p);
        assert!(b <= 0.2 * (1.0 + 1e-12), "{b}");
        let b2 = defect_bound(&p.with_eps_star(2.0 * p.eps_star));
        assert!((b2 / b - 2f64.powf(2.0 / 3.0)).abs() < 1e-12);
        assert!(defect_bound(&p.with_eps_star(1e-12)) < 1e-7);
    }

    #[test]
    fn mode_round_trip() {
        for m in [Mode::Bounded, Mode::Hoelder] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("smooth".parse::<Mode>().is_err());
    }
}
