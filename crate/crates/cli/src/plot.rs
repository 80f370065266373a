//! Minimal line-plot renderer: mean curve over a shaded +/-1 std band,
//! axes and min/max labels, encoded as an RGB PNG.

use anyhow::Result;

use crate::font::{glyph, text_width, GLYPH_H, GLYPH_W};

pub const WIDTH: usize = 640;
pub const HEIGHT: usize = 400;
const LEFT: usize = 80;
const RIGHT: usize = 20;
const TOP: usize = 30;
const BOTTOM: usize = 40;

pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const AXIS: [u8; 3] = [0, 0, 0];
pub const BAND: [u8; 3] = [190, 210, 240];
pub const LINE: [u8; 3] = [20, 60, 160];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Series {
    /// Points whose mean and std are both finite, in x order.
    fn finite_points(&self) -> Vec<(f64, f64, f64)> {
        let mut pts: Vec<(f64, f64, f64)> = (0..self.x.len())
            .map(|i| (self.x[i], self.mean[i], self.std[i]))
            .filter(|(x, m, s)| x.is_finite() && m.is_finite() && s.is_finite())
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }
}

/// Maps data coordinates onto the pixel grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Layout {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

fn padded(lo: f64, hi: f64, rel: f64) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * rel;
        (lo - pad, hi + pad)
    } else {
        let pad = (lo.abs() * 0.05).max(1e-9);
        (lo - pad, hi + pad)
    }
}

impl Layout {
    pub fn fit(series: &Series) -> Self {
        let pts = series.finite_points();
        if pts.is_empty() {
            return Self {
                x_range: (0.0, 1.0),
                y_range: (0.0, 1.0),
            };
        }
        let x_lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let x_hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y_lo = pts.iter().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min);
        let y_hi = pts.iter().map(|p| p.1 + p.2).fold(f64::NEG_INFINITY, f64::max);
        let x_range = if x_hi > x_lo { (x_lo, x_hi) } else { (x_lo - 1.0, x_hi + 1.0) };
        Self {
            x_range,
            y_range: padded(y_lo, y_hi, 0.05),
        }
    }

    pub fn plot_width() -> f64 {
        (WIDTH - LEFT - RIGHT - 1) as f64
    }

    pub fn plot_height() -> f64 {
        (HEIGHT - TOP - BOTTOM - 1) as f64
    }

    pub fn px(&self, x: f64) -> f64 {
        LEFT as f64 + (x - self.x_range.0) / (self.x_range.1 - self.x_range.0) * Self::plot_width()
    }

    /// Pixel row; larger values sit higher.
    pub fn py(&self, y: f64) -> f64 {
        TOP as f64 + (self.y_range.1 - y) / (self.y_range.1 - self.y_range.0) * Self::plot_height()
    }

    #[cfg(test)]
    /// Data units per pixel row.
    pub fn y_per_pixel(&self) -> f64 {
        (self.y_range.1 - self.y_range.0) / Self::plot_height()
    }
}

/// Mean and std at pixel column `col`, linearly interpolated between the
/// neighbouring points; `None` outside the data.
pub fn band_at(series: &Series, layout: &Layout, col: usize) -> Option<(f64, f64)> {
    let pts = series.finite_points();
    let c = col as f64;
    if pts.len() == 1 {
        let p = pts[0];
        return ((layout.px(p.0) - c).abs() <= 2.0).then_some((p.1, p.2));
    }
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (pa, pb) = (layout.px(a.0), layout.px(b.0));
        if c >= pa.floor() && c <= pb.ceil() {
            let t = if pb > pa { ((c - pa) / (pb - pa)).clamp(0.0, 1.0) } else { 0.0 };
            return Some((a.1 + t * (b.1 - a.1), a.2 + t * (b.2 - a.2)));
        }
    }
    None
}

pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    fn new(width: usize, height: usize) -> Self {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            rgb.extend_from_slice(&BACKGROUND);
        }
        Self { width, height, rgb }
    }

    #[cfg(test)]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    fn line(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: [u8; 3]) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let x = (x0 + t * (x1 - x0)).round() as i64;
            let y = (y0 + t * (y1 - y0)).round() as i64;
            self.set(x, y, c);
        }
    }

    fn text(&mut self, x: usize, y: usize, s: &str, c: [u8; 3]) {
        for (k, ch) in s.chars().enumerate() {
            let rows = glyph(ch);
            for (r, bits) in rows.iter().enumerate() {
                for col in 0..GLYPH_W {
                    if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                        self.set((x + k * crate::font::ADVANCE + col) as i64, (y + r) as i64, c);
                    }
                }
            }
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.rgb)?;
        }
        Ok(out)
    }
}

fn label(v: f64) -> String {
    format!("{v:.3e}")
}

pub fn render(title: &str, series: &Series) -> Image {
    let layout = Layout::fit(series);
    let mut img = Image::new(WIDTH, HEIGHT);

    for col in LEFT..WIDTH - RIGHT {
        if let Some((m, s)) = band_at(series, &layout, col) {
            let (top, bottom) = (layout.py(m + s).round() as i64, layout.py(m - s).round() as i64);
            for y in top..=bottom {
                img.set(col as i64, y, BAND);
            }
        }
    }

    let (x0, y0) = (LEFT as f64, TOP as f64);
    let (x1, y1) = (x0 + Layout::plot_width(), y0 + Layout::plot_height());
    img.line((x0, y0), (x0, y1), AXIS);
    img.line((x0, y1), (x1, y1), AXIS);

    let pts = series.finite_points();
    for w in pts.windows(2) {
        img.line((layout.px(w[0].0), layout.py(w[0].1)), (layout.px(w[1].0), layout.py(w[1].1)), LINE);
    }
    for p in &pts {
        let (cx, cy) = (layout.px(p.0).round() as i64, layout.py(p.1).round() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                img.set(cx + dx, cy + dy, LINE);
            }
        }
    }

    img.text(LEFT, (TOP - GLYPH_H) / 2, title, AXIS);
    let (ylo, yhi) = (label(layout.y_range.0), label(layout.y_range.1));
    img.text(LEFT.saturating_sub(text_width(&yhi) + 4), TOP, &yhi, AXIS);
    img.text(LEFT.saturating_sub(text_width(&ylo) + 4), y1 as usize - GLYPH_H, &ylo, AXIS);
    let below = y1 as usize + 6;
    let (xlo, xhi) = (format!("{}", layout.x_range.0), format!("{}", layout.x_range.1));
    img.text(LEFT, below, &xlo, AXIS);
    img.text((x1 as usize).saturating_sub(text_width(&xhi)), below, &xhi, AXIS);
    let xname = "timestep";
    img.text(LEFT + (Layout::plot_width() as usize - text_width(xname)) / 2, below + GLYPH_H + 6, xname, AXIS);
    img
}
