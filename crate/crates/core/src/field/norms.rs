//! Empirical sup, Lipschitz and Hölder norms of single stages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cells::{stage_rects, Half, Rect};
use super::params::Mode;
use super::{Field, CHI_SUPPORT};

#[derive(Debug, Clone, PartialEq)]
pub struct StageNorms {
    pub stage: u32,
    pub sup_norm: f64,
    pub lipschitz: f64,
    /// Sampled `alpha`-Hölder seminorm in space at the peak of the time profile.
    pub holder: f64,
    /// Predicted ratio of consecutive Hölder seminorms, `2^{alpha-1} / (tau kappa^alpha)`.
    pub holder_ratio_predicted: f64,
    /// Predicted ratio of consecutive Lipschitz constants, `1 / (tau kappa)`.
    pub lipschitz_ratio_predicted: f64,
}

struct Accum {
    alpha: f64,
    sup: f64,
    lip: f64,
    holder: f64,
}

impl Accum {
    fn pair(&mut self, p: [f64; 2], vp: [f64; 2], q: [f64; 2], vq: [f64; 2]) {
        let d = (p[0] - q[0]).hypot(p[1] - q[1]);
        if d == 0.0 {
            return;
        }
        let dv = (vp[0] - vq[0]).hypot(vp[1] - vq[1]);
        self.lip = self.lip.max(dv / d);
        self.holder = self.holder.max(dv / d.powf(self.alpha));
    }

    fn point(&mut self, v: [f64; 2]) {
        self.sup = self.sup.max(v[0].hypot(v[1]));
    }
}

/// Local offsets clustered at both edges of `[0, 1]`, where the boundary
/// layer of the regularised stream function sits.
fn edge_grid(per_side: usize) -> Vec<f64> {
    let (lo, hi) = (1e-7f64.ln(), 0.5f64.ln());
    let mut s: Vec<f64> = (0..per_side)
        .map(|i| (lo + (hi - lo) * i as f64 / (per_side - 1) as f64).exp())
        .collect();
    let mirrored: Vec<f64> = s.iter().rev().skip(1).map(|x| 1.0 - x).collect();
    s.extend(mirrored);
    s
}

fn scan_half(field: &Field, stage: u32, half: Half, rect: Rect, pair_samples: usize, rng: &mut ChaCha8Rng, acc: &mut Accum) {
    let len = field.params().stage_length(stage);
    let start = super::half_window(field.params(), stage, half).0;
    // v = profile(t) * shape(x), so the spatial norms peak at the profile maximum
    let t = start + 0.5 * (CHI_SUPPORT.0 + CHI_SUPPORT.1) * len;
    let v = |p: [f64; 2]| field.half_velocity(stage, half, t, p);

    let grid = edge_grid(240);
    for axis in 0..2 {
        for &across in &[0.5, 0.3, 0.15, 0.05] {
            let pts: Vec<[f64; 2]> = grid
                .iter()
                .map(|&s| rect.from_local(if axis == 0 { [s, across] } else { [across, s] }))
                .collect();
            let vs: Vec<[f64; 2]> = pts.iter().map(|&p| v(p)).collect();
            for i in 0..pts.len() {
                acc.point(vs[i]);
                for j in i + 1..pts.len() {
                    acc.pair(pts[i], vs[i], pts[j], vs[j]);
                }
            }
        }
    }

    let scale = rect.w.min(rect.h);
    for _ in 0..pair_samples {
        let p = rect.from_local([rng.random::<f64>(), rng.random::<f64>()]);
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let r = scale * 10f64.powf(-6.0 * rng.random::<f64>());
        let q = [p[0] + r * theta.cos(), p[1] + r * theta.sin()];
        let (vp, vq) = (v(p), v(q));
        acc.point(vp);
        acc.pair(p, vp, q, vq);
    }
}

/// Empirical norms of the stage-`stage` field over both halves.
///
/// All cells of a half are translates of each other, so one representative
/// cell is scanned: pair quotients along lines crossing its boundary layer
/// plus `pair_samples` random multiscale pairs.
pub fn stage_norm_report(field: &Field, stage: u32, pair_samples: usize, seed: u64) -> StageNorms {
    let p = field.params();
    let alpha = p.alpha;
    let mut acc = Accum { alpha, sup: 0.0, lip: 0.0, holder: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(stage) << 32));
    for half in [Half::First, Half::Second] {
        let rect = stage_rects(stage, half)[0];
        scan_half(field, stage, half, rect, pair_samples, &mut rng, &mut acc);
    }
    let (holder_ratio_predicted, lipschitz_ratio_predicted) = match p.mode {
        Mode::Hoelder => (2f64.powf(alpha - 1.0) / (p.tau * p.kappa.powf(alpha)), 1.0 / (p.tau * p.kappa)),
        Mode::Bounded => (2f64.powf(alpha - 1.0) / p.tau, 1.0 / p.tau),
    };
    StageNorms {
        stage,
        sup_norm: acc.sup,
        lipschitz: acc.lip,
        holder: acc.holder,
        holder_ratio_predicted,
        lipschitz_ratio_predicted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{params_from, Mode};

    #[test]
    fn edge_grid_is_symmetric_and_sorted() {
        let g = edge_grid(10);
        assert_eq!(g.len(), 19);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!((g[0] + g[18] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bounded_sup_norm_is_stage_independent() {
        let f = Field::build(params_from(0, 0.5, 0.2, Mode::Bounded, 4).unwrap()).unwrap();
        let s: Vec<f64> = (1..=4).map(|n| stage_norm_report(&f, n, 200, 1).sup_norm).collect();
        for w in s.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 1e-3, "{s:?}");
        }
        assert!((s[0] - 8.0).abs() < 0.05, "{s:?}");
    }
}
