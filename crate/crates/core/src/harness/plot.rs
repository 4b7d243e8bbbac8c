//! Minimal raster line plots: median lines over an interquartile band.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};

const WIDTH: u32 = 480;
const HEIGHT: u32 = 320;
const MARGIN: u32 = 32;

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
    [23, 190, 207],
];

/// Points of one curve: time, first quartile, median, third quartile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    points: Vec<(f64, f64, f64, f64)>,
}

impl Series {
    pub fn push(&mut self, t: f64, q1: f64, median: f64, q3: f64) {
        self.points.push((t, q1, median, q3));
    }

    fn sorted(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut p: Vec<_> = self.points.iter().copied().filter(|p| p.0.is_finite() && p.2.is_finite()).collect();
        p.sort_by(|a, b| a.0.total_cmp(&b.0));
        p
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinePlot {
    pub series: Vec<Series>,
}

struct Frame {
    t0: f64,
    t1: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, t: f64, y: f64) -> (f64, f64) {
        let w = (WIDTH - 2 * MARGIN) as f64;
        let h = (HEIGHT - 2 * MARGIN) as f64;
        let fx = if self.t1 > self.t0 { (t - self.t0) / (self.t1 - self.t0) } else { 0.5 };
        let fy = (y / self.y1).clamp(0.0, 1.0);
        (MARGIN as f64 + fx * w, (HEIGHT - MARGIN) as f64 - fy * h)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>, thick: i64) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let s = i as f64 / steps as f64;
        let x = (a.0 + s * (b.0 - a.0)).round() as i64;
        let y = (a.1 + s * (b.1 - a.1)).round() as i64;
        for dy in 0..thick {
            for dx in 0..thick {
                put(img, x + dx, y + dy, c);
            }
        }
    }
}

fn blend(c: [u8; 3], alpha: f64) -> Rgb<u8> {
    let mix = |v: u8| (255.0 - alpha * (255.0 - v as f64)).round() as u8;
    Rgb([mix(c[0]), mix(c[1]), mix(c[2])])
}

impl LinePlot {
    /// Renders the plot; the y axis starts at zero, the x axis spans the
    /// time range of all series.
    pub fn render(&self) -> RgbImage {
        let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
        let all: Vec<_> = self.series.iter().flat_map(|s| s.sorted()).collect();
        let t0 = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let t1 = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let ymax = all
            .iter()
            .map(|p| if p.3.is_finite() { p.3.max(p.2) } else { p.2 })
            .fold(0.0, f64::max);
        let frame = Frame {
            t0: if t0.is_finite() { t0 } else { 0.0 },
            t1: if t1.is_finite() { t1 } else { 1.0 },
            y1: if ymax > 0.0 { ymax * 1.05 } else { 1.0 },
        };

        let black = Rgb([0, 0, 0]);
        let (ox, oy) = (MARGIN as f64, (HEIGHT - MARGIN) as f64);
        line(&mut img, (ox, oy), ((WIDTH - MARGIN) as f64, oy), black, 1);
        line(&mut img, (ox, oy), (ox, MARGIN as f64), black, 1);
        for p in &all {
            let (x, _) = frame.px(p.0, 0.0);
            line(&mut img, (x, oy), (x, oy + 4.0), black, 1);
        }

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts = s.sorted();
            // Interquartile band, filled column by column between adjacent points.
            for w in pts.windows(2) {
                let (a, b) = (w[0], w[1]);
                if !(a.1.is_finite() && a.3.is_finite() && b.1.is_finite() && b.3.is_finite()) {
                    continue;
                }
                let (xa, _) = frame.px(a.0, 0.0);
                let (xb, _) = frame.px(b.0, 0.0);
                let (xa, xb) = (xa.round() as i64, xb.round() as i64);
                for x in xa..=xb {
                    let s = if xb > xa { (x - xa) as f64 / (xb - xa) as f64 } else { 0.0 };
                    let lo = frame.px(0.0, a.1 + s * (b.1 - a.1)).1.round() as i64;
                    let hi = frame.px(0.0, a.3 + s * (b.3 - a.3)).1.round() as i64;
                    for y in hi..=lo {
                        let old = img.get_pixel(x.clamp(0, WIDTH as i64 - 1) as u32, y.clamp(0, HEIGHT as i64 - 1) as u32).0;
                        let band = blend(color, 0.25).0;
                        put(&mut img, x, y, Rgb([old[0].min(band[0]), old[1].min(band[1]), old[2].min(band[2])]));
                    }
                }
            }
            let c = Rgb(color);
            for w in pts.windows(2) {
                line(&mut img, frame.px(w[0].0, w[0].2), frame.px(w[1].0, w[1].2), c, 2);
            }
            for p in &pts {
                let (x, y) = frame.px(p.0, p.2);
                for d in -2..=2 {
                    put(&mut img, x.round() as i64 + d, y.round() as i64, c);
                    put(&mut img, x.round() as i64, y.round() as i64 + d, c);
                }
            }
        }
        img
    }

    pub fn render_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.render()
            .write_to(&mut buf, ImageFormat::Png)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(buf.into_inner())
    }
}
