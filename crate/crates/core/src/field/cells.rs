use super::params::FieldParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Half {
    First,
    Second,
}

impl Half {
    pub fn index(self) -> usize {
        match self {
            Half::First => 0,
            Half::Second => 1,
        }
    }
}

/// Axis-aligned dyadic rectangle `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn center(&self) -> [f64; 2] {
        [self.x0 + 0.5 * self.w, self.y0 + 0.5 * self.h]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] < self.x0 + self.w && p[1] >= self.y0 && p[1] < self.y0 + self.h
    }

    /// Coordinates of `p` in the unit square under the cell's affine chart.
    #[inline]
    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.x0) / self.w, (p[1] - self.y0) / self.h]
    }

    #[inline]
    pub fn from_local(&self, a: [f64; 2]) -> [f64; 2] {
        [self.x0 + a[0] * self.w, self.y0 + a[1] * self.h]
    }

    /// Point reflection through the centre.
    pub fn reflect(&self, p: [f64; 2]) -> [f64; 2] {
        let c = self.center();
        [2.0 * c[0] - p[0], 2.0 * c[1] - p[1]]
    }

    /// Distance from `p` to the rectangle's boundary (for `p` inside).
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        let dx = (p[0] - self.x0).min(self.x0 + self.w - p[0]);
        let dy = (p[1] - self.y0).min(self.y0 + self.h - p[1]);
        dx.min(dy)
    }
}

/// A block placed on one rectangle during one half of one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub rect: Rect,
    pub stage: u32,
    pub half: Half,
    /// Absolute half-window `[t_start, t_end)`.
    pub window: (f64, f64),
    /// Regularisation `eps_n`; zero for square-contour blocks.
    pub eps: f64,
    /// Stream-function multiplier `lambda`; the block's orbit period in
    /// physical time is `(w h / lambda)` times its unit-square period.
    pub amplitude: f64,
}

/// Cell dimensions `(w, h)` and the log2 resolutions used to index them.
///
/// Odd stage `2m+1`: the condition digit is `y` digit `2m+2`, cells are
/// `2^{-2m} x 2^{-(2m+2)}` and the second half splits them in `x`.
/// Even stage `2m+2`: the condition digit is `x` digit `2m+3`, cells are
/// `2^{-(2m+3)} x 2^{-(2m+1)}` and the second half splits them in `y`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    /// Resolution of the axis carrying the condition digit.
    cond_bits: u32,
    /// Resolution of the other axis.
    free_bits: u32,
    /// True when the condition digit lives on `y`.
    cond_on_y: bool,
}

fn layout(stage: u32, half: Half) -> Layout {
    assert!(stage >= 1, "stages start at 1");
    let m = (stage - 1) / 2;
    let split = u32::from(half == Half::Second);
    if stage % 2 == 1 {
        Layout { cond_bits: 2 * m + 2, free_bits: 2 * m + split, cond_on_y: true }
    } else {
        Layout { cond_bits: 2 * m + 3, free_bits: 2 * m + 1 + split, cond_on_y: false }
    }
}

fn pow2_neg(bits: u32) -> f64 {
    (-(bits as f64)).exp2()
}

/// Dimensions `(w, h)` of the cells of a stage half.
pub fn cell_shape(stage: u32, half: Half) -> (f64, f64) {
    let l = layout(stage, half);
    let (c, f) = (pow2_neg(l.cond_bits), pow2_neg(l.free_bits));
    if l.cond_on_y {
        (f, c)
    } else {
        (c, f)
    }
}

/// The rectangle of the stage half containing `p` in `[0, 1)^2`, if any.
#[inline]
pub fn locate_rect(stage: u32, half: Half, p: [f64; 2]) -> Option<Rect> {
    let l = layout(stage, half);
    let (pc, pf) = if l.cond_on_y { (p[1], p[0]) } else { (p[0], p[1]) };
    let nc = (l.cond_bits as f64).exp2();
    let nf = (l.free_bits as f64).exp2();
    let ic = (pc * nc).floor();
    if ic < 0.0 || ic >= nc || (ic as u64).is_multiple_of(2) {
        return None;
    }
    let jf = (pf * nf).floor().clamp(0.0, nf - 1.0);
    let (c0, cw) = (ic / nc, 1.0 / nc);
    let (f0, fw) = (jf / nf, 1.0 / nf);
    Some(if l.cond_on_y {
        Rect { x0: f0, y0: c0, w: fw, h: cw }
    } else {
        Rect { x0: c0, y0: f0, w: cw, h: fw }
    })
}

/// All rectangles of a stage half, ordered by `(y0, x0)`.
pub fn stage_rects(stage: u32, half: Half) -> Vec<Rect> {
    let l = layout(stage, half);
    let nc = 1u64 << l.cond_bits;
    let nf = 1u64 << l.free_bits;
    let (cw, fw) = (1.0 / nc as f64, 1.0 / nf as f64);
    let mut out = Vec::with_capacity((nc / 2 * nf) as usize);
    if l.cond_on_y {
        for ic in (1..nc).step_by(2) {
            for jf in 0..nf {
                out.push(Rect { x0: jf as f64 * fw, y0: ic as f64 * cw, w: fw, h: cw });
            }
        }
    } else {
        for jf in 0..nf {
            for ic in (1..nc).step_by(2) {
                out.push(Rect { x0: ic as f64 * cw, y0: jf as f64 * fw, w: cw, h: fw });
            }
        }
    }
    out
}

/// Number of cells in a stage half.
pub fn cell_count(stage: u32, half: Half) -> u64 {
    let l = layout(stage, half);
    (1u64 << (l.cond_bits - 1)) << l.free_bits
}

/// Absolute half-window of a stage half.
pub fn half_window(params: &FieldParams, stage: u32, half: Half) -> (f64, f64) {
    let start = params.tau_partial(stage - 1);
    let len = params.stage_length(stage);
    match half {
        Half::First => (start, start + 0.5 * len),
        Half::Second => (start + 0.5 * len, params.tau_partial(stage)),
    }
}

/// Cells of one stage half with their windows, regularisation and amplitude.
pub fn cells_for_stage(params: &FieldParams, stage: u32, half: Half) -> Vec<Cell> {
    let window = half_window(params, stage, half);
    let eps = params.stage_eps(stage);
    let speed = super::amplitude_factor(params, stage);
    stage_rects(stage, half)
        .into_iter()
        .map(|rect| Cell { rect, stage, half, window, eps, amplitude: speed * rect.area() })
        .collect()
}

/// Finest dyadic resolutions `(bits_x, bits_y)` of the cell boundaries up to `stage`.
pub fn boundary_resolution(stages: u32) -> (u32, u32) {
    let mut bx = 0;
    let mut by = 0;
    for n in 1..=stages {
        for half in [Half::First, Half::Second] {
            let (w, h) = cell_shape(n, half);
            bx = bx.max((-w.log2()).round() as u32);
            by = by.max((-h.log2()).round() as u32);
        }
    }
    (bx, by)
}

/// Distance from `p` to the nearest cell boundary of stages `1..=stages`.
pub fn distance_to_cell_boundaries(stages: u32, p: [f64; 2]) -> f64 {
    let (bx, by) = boundary_resolution(stages);
    let grid = |x: f64, bits: u32| {
        let n = (bits as f64).exp2();
        let f = (x * n).fract().abs();
        f.min(1.0 - f) / n
    };
    grid(p[0], bx).min(grid(p[1], by))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x0: f64, y0: f64, w: f64, h: f64) -> Rect {
        Rect { x0, y0, w, h }
    }

    #[test]
    fn stage_one_layout() {
        assert_eq!(stage_rects(1, Half::First), vec![r(0.0, 0.25, 1.0, 0.25), r(0.0, 0.75, 1.0, 0.25)]);
        assert_eq!(
            stage_rects(1, Half::Second),
            vec![r(0.0, 0.25, 0.5, 0.25), r(0.5, 0.25, 0.5, 0.25), r(0.0, 0.75, 0.5, 0.25), r(0.5, 0.75, 0.5, 0.25)]
        );
    }

    #[test]
    fn stage_two_layout() {
        let cells = stage_rects(2, Half::First);
        assert_eq!(cells.len(), 8);
        for c in &cells {
            assert_eq!((c.w, c.h), (0.125, 0.5));
            assert_eq!(((c.x0 * 8.0) as u32) % 2, 1);
        }
        let xs: Vec<f64> = cells.iter().filter(|c| c.y0 == 0.0).map(|c| c.x0).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(cell_shape(2, Half::Second), (0.125, 0.25));
    }

    #[test]
    fn tiling_covers_half_the_torus() {
        for n in 1..=7 {
            for half in [Half::First, Half::Second] {
                let rects = stage_rects(n, half);
                assert_eq!(rects.len() as u64, cell_count(n, half));
                let area: f64 = rects.iter().map(Rect::area).sum();
                assert!((area - 0.5).abs() < 1e-12);
                for rc in &rects {
                    let c = rc.center();
                    assert_eq!(locate_rect(n, half, c), Some(*rc));
                }
            }
        }
    }

    #[test]
    fn locate_misses_inactive_rows() {
        assert_eq!(locate_rect(1, Half::First, [0.5, 0.1]), None);
        assert_eq!(locate_rect(2, Half::First, [0.05, 0.3]), None);
        assert!(locate_rect(2, Half::First, [0.2, 0.3]).is_some());
    }

    #[test]
    fn composed_reflections_translate() {
        // stage 1: centres (1/2, 3/8) then (3/4, 3/8)
        let c1 = r(0.0, 0.25, 1.0, 0.25);
        let c2 = r(0.5, 0.25, 0.5, 0.25);
        let p = [0.3, 0.3];
        let q = c1.reflect(p);
        assert!(c2.contains(q));
        let out = c2.reflect(q);
        assert!((out[0] - (p[0] + 0.5)).abs() < 1e-15 && (out[1] - p[1]).abs() < 1e-15);
    }

    #[test]
    fn boundary_distance_grid() {
        assert_eq!(boundary_resolution(1), (1, 2));
        assert_eq!(boundary_resolution(2), (3, 2));
        assert!((distance_to_cell_boundaries(1, [0.49, 0.3]) - 0.01).abs() < 1e-12);
    }
}
