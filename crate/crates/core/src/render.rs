//! Raster and vector snapshots: advected gradients, stream function level
//! sets, cell layouts and histogram occupancy.
//!
//! Rasters are written as binary PPM (P6); SVG output draws the same content
//! as rectangles and polylines in the unit square with `x2` pointing up.

use std::fmt::Write as _;
use std::io::Write;

use crate::dyadic::{decode_center, encode, psi_step, DigitAddress, TorusPoint};
use crate::error::{Error, Result};
use crate::field::{stage_rects, Field, Half};
use crate::flow::{advect_batch, Direction, PushforwardHistogram, StepPolicy};
use crate::streamfn::{contour_polygon, psi_value};

/// Digit depth used for the symbolic evolution prediction.
const PREDICTION_DEPTH: u32 = 16;

/// Row-major scalar image; row 0 is the top edge (`x2` near 1).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Maps `[lo, hi]` linearly to black..white.
    pub fn to_rgb(&self, lo: f64, hi: f64) -> RgbImage {
        let span = if hi > lo { hi - lo } else { 1.0 };
        let data = self
            .data
            .iter()
            .flat_map(|&v| {
                let g = (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8;
                [g, g, g]
            })
            .collect();
        RgbImage { width: self.width, height: self.height, data }
    }
}

/// Row-major 8-bit RGB image; row 0 is the top edge.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self { width, height, data: rgb.repeat(width * height) }
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, col: usize, row: usize, rgb: [u8; 3]) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn write_ppm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.data)
    }

    /// SVG with one rectangle per horizontal run of equal pixels.
    pub fn to_svg(&self) -> String {
        let mut s = svg_open(self.width as f64, self.height as f64);
        for row in 0..self.height {
            let mut col = 0;
            while col < self.width {
                let c = self.pixel(col, row);
                let mut end = col + 1;
                while end < self.width && self.pixel(end, row) == c {
                    end += 1;
                }
                let _ = writeln!(
                    s,
                    r#"<rect x="{col}" y="{row}" width="{}" height="1" fill="{}"/>"#,
                    end - col,
                    hex_color(c)
                );
                col = end;
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Parses a binary P6 image as written by [`RgbImage::write_ppm`].
pub fn read_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let err = |r: &str| Error::Parse { what: "ppm", reason: r.into() };
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("header is not ascii"))?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(err("expected P6 with maxval 255"));
    }
    let width: usize = fields[1].parse().map_err(|_| err("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| err("bad height"))?;
    let data = bytes.get(pos + 1..).ok_or_else(|| err("missing pixel data"))?;
    if data.len() != 3 * width * height {
        return Err(err("pixel data has the wrong length"));
    }
    Ok(RgbImage { width, height, data: data.to_vec() })
}

fn hex_color(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" width=\"{}\" height=\"{}\" shape-rendering=\"crispEdges\">\n",
        w.max(256.0),
        h.max(256.0) * h / w.max(f64::MIN_POSITIVE)
    )
}

/// Centre of pixel `(col, row)` in an `n x n` raster of the unit square.
pub fn pixel_center(n: usize, col: usize, row: usize) -> TorusPoint {
    TorusPoint::new((col as f64 + 0.5) / n as f64, 1.0 - (row as f64 + 0.5) / n as f64)
}

fn pixel_centers(n: usize) -> Vec<TorusPoint> {
    (0..n).flat_map(|row| (0..n).map(move |col| pixel_center(n, col, row))).collect()
}

/// The initial gradient `x1` carried by the flow to time `t`: each pixel
/// holds the first coordinate of its preimage at time 0.
pub fn evolution_snapshot(field: &Field, t: f64, resolution: usize, policy: &StepPolicy) -> Result<GrayImage> {
    let pts = pixel_centers(resolution);
    let pre = advect_batch(field, Direction::Forward, &pts, t, 0.0, policy)?;
    Ok(GrayImage { width: resolution, height: resolution, data: pre.iter().map(|p| p.x1).collect() })
}

/// The same picture after `stages` whole stages, computed from the digit
/// steps alone. Each step is an involution, so the preimage is obtained by
/// running the steps in reverse order.
pub fn predicted_evolution(stages: u32, resolution: usize) -> Result<GrayImage> {
    let depth = PREDICTION_DEPTH.max(stages + 1);
    let data = pixel_centers(resolution)
        .into_iter()
        .map(|p| {
            let mut a = encode(p, depth)?;
            for s in (1..=stages).rev() {
                a = psi_step(&a, s)?;
            }
            Ok(decode_center(&a).x1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GrayImage { width: resolution, height: resolution, data })
}

/// Mean value over each depth-`depth` dyadic square, indexed like
/// [`DigitAddress::box_index`].
pub fn block_means(img: &GrayImage, depth: u32) -> Result<Vec<f64>> {
    let side = 1usize << depth;
    if img.width != img.height || !img.width.is_multiple_of(side) {
        return Err(Error::InvalidParam { name: "depth", reason: "image side must be a multiple of 2^depth".into() });
    }
    let mut sums = vec![0.0; side * side];
    let mut counts = vec![0usize; side * side];
    for row in 0..img.height {
        for col in 0..img.width {
            let p = pixel_center(img.width, col, row);
            let i = encode(p, depth)?.box_index();
            sums[i] += img.get(col, row);
            counts[i] += 1;
        }
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

/// Block-by-block agreement of a rendered snapshot with its prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockComparison {
    pub depth: u32,
    pub max_error: f64,
    /// Blocks whose rendered mean is nearer to its own predicted value than
    /// to any other value of the predicted palette.
    pub palette_hits: usize,
    pub blocks: usize,
}

pub fn compare_blocks(rendered: &GrayImage, predicted: &GrayImage, depth: u32) -> Result<BlockComparison> {
    let r = block_means(rendered, depth)?;
    let p = block_means(predicted, depth)?;
    let mut palette = p.clone();
    palette.sort_by(f64::total_cmp);
    palette.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut max_error: f64 = 0.0;
    let mut palette_hits = 0;
    for (&got, &want) in r.iter().zip(&p) {
        max_error = max_error.max((got - want).abs());
        let nearest = palette.iter().copied().min_by(|a, b| (a - got).abs().total_cmp(&(b - got).abs()));
        if nearest.is_some_and(|n| (n - want).abs() < 1e-12) {
            palette_hits += 1;
        }
    }
    Ok(BlockComparison { depth, max_error, palette_hits, blocks: r.len() })
}

/// Raster of the block stream function with dark isolines at `levels`
/// equally spaced values.
pub fn contour_raster(resolution: usize, levels: usize) -> RgbImage {
    let top = psi_value(0.5, 0.5);
    let band = |v: f64| ((v / top) * levels as f64).floor() as i64;
    let n = resolution;
    let vals: Vec<f64> = pixel_centers(n).iter().map(|p| psi_value(p.x1, p.x2)).collect();
    let mut img = RgbImage::filled(n, n, [255, 255, 255]);
    for row in 0..n {
        for col in 0..n {
            let v = vals[row * n + col];
            let b = band(v);
            let edge = (col + 1 < n && band(vals[row * n + col + 1]) != b) || (row + 1 < n && band(vals[(row + 1) * n + col]) != b);
            let g = if edge { 0 } else { 255 - (160.0 * v / top) as u8 };
            img.set(col, row, [g, g, 255]);
        }
    }
    img
}

/// Closed level sets of the block stream function as SVG polylines.
pub fn contour_svg(levels: usize, per_octant: usize) -> Result<String> {
    let top = psi_value(0.5, 0.5);
    let mut s = svg_open(1.0, 1.0);
    s.push_str("<g transform=\"translate(0,1) scale(1,-1)\" fill=\"none\" stroke=\"#000\" stroke-width=\"0.003\">\n");
    s.push_str("<rect x=\"0\" y=\"0\" width=\"1\" height=\"1\"/>\n");
    for i in 1..=levels {
        let level = top * i as f64 / (levels + 1) as f64;
        let pts = contour_polygon(level, per_octant)?;
        s.push_str("<polygon points=\"");
        for p in &pts {
            let _ = write!(s, "{:.6},{:.6} ", p[0], p[1]);
        }
        s.push_str("\"/>\n");
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

fn half_color(half: Half) -> [u8; 3] {
    match half {
        Half::First => [120, 160, 220],
        Half::Second => [230, 160, 90],
    }
}

/// Raster of the cells active in a stage half, in a checkerboard of two shades.
pub fn cells_raster(stage: u32, half: Half, resolution: usize) -> RgbImage {
    let mut img = RgbImage::filled(resolution, resolution, [255, 255, 255]);
    let base = half_color(half);
    let dark = base.map(|c| (c as f64 * 0.75) as u8);
    for (i, r) in stage_rects(stage, half).iter().enumerate() {
        let col_lo = (r.x0 * resolution as f64).round() as usize;
        let col_hi = ((r.x0 + r.w) * resolution as f64).round() as usize;
        let row_lo = ((1.0 - r.y0 - r.h) * resolution as f64).round() as usize;
        let row_hi = ((1.0 - r.y0) * resolution as f64).round() as usize;
        let c = if i % 2 == 0 { base } else { dark };
        for row in row_lo..row_hi.min(resolution) {
            for col in col_lo..col_hi.min(resolution) {
                img.set(col, row, c);
            }
        }
    }
    img
}

/// Cell rectangles of a stage half, each with an arrow along its upper
/// orbit showing the sense of rotation.
pub fn cells_svg(stage: u32, half: Half) -> String {
    let rects = stage_rects(stage, half);
    let mut s = svg_open(1.0, 1.0);
    s.push_str("<defs><marker id=\"head\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" markerWidth=\"4\" markerHeight=\"4\" orient=\"auto\"><path d=\"M0,0 L10,5 L0,10 z\"/></marker></defs>\n");
    s.push_str("<g transform=\"translate(0,1) scale(1,-1)\" stroke-width=\"0.002\">\n");
    s.push_str("<rect x=\"0\" y=\"0\" width=\"1\" height=\"1\" fill=\"none\" stroke=\"#000\"/>\n");
    let fill = hex_color(half_color(half));
    for r in &rects {
        let _ = writeln!(
            s,
            r##"<rect x="{:.6}" y="{:.6}" width="{:.6}" height="{:.6}" fill="{fill}" stroke="#333"/>"##,
            r.x0, r.y0, r.w, r.h
        );
        // the top of each orbit moves in the +x1 direction
        let y = r.y0 + 0.75 * r.h;
        let _ = writeln!(
            s,
            r##"<line x1="{:.6}" y1="{y:.6}" x2="{:.6}" y2="{y:.6}" stroke="#000" marker-end="url(#head)"/>"##,
            r.x0 + 0.3 * r.w,
            r.x0 + 0.7 * r.w
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// One square of `scale` pixels per histogram box; empty boxes are red,
/// occupied boxes gray with brightness proportional to the count.
pub fn histogram_raster(h: &PushforwardHistogram, scale: usize) -> Result<RgbImage> {
    let side = 1usize << h.depth;
    let n = side * scale;
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut img = RgbImage::filled(n, n, [0, 0, 0]);
    for (i, &c) in h.counts.iter().enumerate() {
        let corner = crate::dyadic::decode(&DigitAddress::from_box_index(h.depth, i)?);
        let col0 = (corner.x1 * side as f64).round() as usize;
        let row0 = side - 1 - (corner.x2 * side as f64).round() as usize;
        let rgb = if c == 0 {
            [200, 30, 30]
        } else {
            let g = (40.0 + 215.0 * c as f64 / max) as u8;
            [g, g, g]
        };
        for row in row0 * scale..(row0 + 1) * scale {
            for col in col0 * scale..(col0 + 1) * scale {
                img.set(col, row, rgb);
            }
        }
    }
    Ok(img)
}
