//! A small rasterizer for heatmaps and line plots written as PNG.
//!
//! Heatmaps use a five-stop ramp from dark blue through teal and green to
//! yellow (low to high). Line plots draw axes with five ticks per axis and
//! numeric tick labels in a 3x5 pixel font.

use crate::error::Result;
use crate::signals::io::encode_png_raw;

const STOPS: [[f64; 3]; 5] = [
    [0.27, 0.00, 0.33],
    [0.23, 0.32, 0.55],
    [0.13, 0.57, 0.55],
    [0.37, 0.79, 0.38],
    [0.99, 0.91, 0.14],
];

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

/// Colour of `t` in `[0, 1]` on the heatmap ramp.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    std::array::from_fn(|c| ((STOPS[i][c] * (1.0 - f) + STOPS[i + 1][c] * f) * 255.0).round() as u8)
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Canvas {
    fn new(w: usize, h: usize) -> Self {
        Self { w, h, px: vec![255; w * h * 3] }
    }

    fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            let k = (y as usize * self.w + x as usize) * 3;
            self.px[k..k + 3].copy_from_slice(&c);
        }
    }

    fn rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, c: [u8; 3]) {
        for y in y0..y1 {
            for x in x0..x1 {
                self.set(x as i64, y as i64, c);
            }
        }
    }

    /// Bresenham line.
    fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.set(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, c: [u8; 3]) {
        for (i, ch) in s.chars().enumerate() {
            let rows = glyph(ch);
            for (r, bits) in rows.iter().enumerate() {
                for col in 0..3 {
                    if bits >> (2 - col) & 1 == 1 {
                        self.set(x + 4 * i as i64 + col, y + r as i64, c);
                    }
                }
            }
        }
    }

    fn png(&self) -> Result<Vec<u8>> {
        encode_png_raw(self.w as u32, self.h as u32, png::ColorType::Rgb, &self.px)
    }
}

fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '-' => [0, 0, 7, 0, 0],
        'e' => [0, 7, 7, 4, 7],
        _ => [0; 5],
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Renders `values[row][col]` with `cell` pixels per entry, row 0 at the
/// top, scaled between the finite minimum and maximum.
pub fn heatmap_png(values: &[Vec<f64>], cell: usize) -> Result<Vec<u8>> {
    let rows = values.len().max(1);
    let cols = values.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let cell = cell.max(1);
    let finite = values.iter().flatten().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut canvas = Canvas::new(cols * cell, rows * cell);
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let colour = colormap((v - lo) / span);
            canvas.rect(c * cell, r * cell, (c + 1) * cell, (r + 1) * cell, colour);
        }
    }
    canvas.png()
}

/// One curve of a line plot.
#[derive(Clone, Debug)]
pub struct Series<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
}

/// Draws curves on shared axes. With `log_y` the vertical axis shows
/// `log10(y)` and nonpositive points are skipped.
pub fn line_plot_png(series: &[Series], width: usize, height: usize, log_y: bool) -> Result<Vec<u8>> {
    let (w, h) = (width.max(64), height.max(48));
    let (left, right, top, bottom) = (36i64, 8i64, 8i64, 16i64);
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let points: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.x.iter()
                .zip(s.y)
                .map(|(&x, &y)| (x, ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let (lo, hi) = points
            .iter()
            .flatten()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let (pw, ph) = (w as i64 - left - right, h as i64 - top - bottom);
    let to_px = |x: f64, y: f64| {
        let px = left + ((x - x0) / (x1 - x0) * pw as f64).round() as i64;
        let py = top + ph - ((y - y0) / (y1 - y0) * ph as f64).round() as i64;
        (px, py)
    };
    let mut canvas = Canvas::new(w, h);
    let axis = [0, 0, 0];
    canvas.line((left, top), (left, top + ph), axis);
    canvas.line((left, top + ph), (left + pw, top + ph), axis);
    for i in 0..5 {
        let f = i as f64 / 4.0;
        let (tx, _) = to_px(x0 + f * (x1 - x0), y0);
        canvas.line((tx, top + ph), (tx, top + ph + 3), axis);
        let xl = label(x0 + f * (x1 - x0));
        canvas.text(tx - 2 * xl.len() as i64, top + ph + 6, &xl, axis);
        let (_, ty) = to_px(x0, y0 + f * (y1 - y0));
        canvas.line((left - 3, ty), (left, ty), axis);
        let v = y0 + f * (y1 - y0);
        let yl = label(if log_y { 10f64.powf(v) } else { v });
        canvas.text(left - 5 - 4 * yl.len() as i64, ty - 2, &yl, axis);
    }
    for (k, pts) in points.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        for pair in pts.windows(2) {
            canvas.line(to_px(pair[0].0, pair[0].1), to_px(pair[1].0, pair[1].1), colour);
        }
        if pts.len() == 1 {
            let p = to_px(pts[0].0, pts[0].1);
            canvas.set(p.0, p.1, colour);
        }
    }
    canvas.png()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::io::decode_image;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [69, 0, 84]);
        assert_eq!(colormap(1.0), [252, 232, 36]);
        assert_eq!(colormap(f64::NAN), colormap(0.0));
    }

    #[test]
    fn heatmap_dimensions() {
        let png = heatmap_png(&[vec![0.0, 1.0, 2.0], vec![3.0, 4.0, 5.0]], 4).unwrap();
        let g = decode_image(&png, "h").unwrap();
        assert_eq!(g.spatial(), &[8, 12]);
    }

    #[test]
    fn line_plot_renders() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 0.1, 0.01, 0.001];
        let png = line_plot_png(&[Series { x: &x, y: &y }], 200, 120, true).unwrap();
        let g = decode_image(&png, "p").unwrap();
        assert_eq!(g.spatial(), &[120, 200]);
        assert!(g.value_range().0 < 0.5);
    }
}
