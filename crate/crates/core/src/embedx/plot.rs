use std::path::Path;

use image::{Rgb, RgbImage};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];
const MARGIN: u32 = 40;

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Bresenham line, two pixels thick.
fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        put(img, x, y + 1, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Draws every series as a polyline on shared axes. Colors follow series
/// order; a row of swatches along the top edge repeats that order.
pub fn render_line_plot(series: &[Series], width: u32, height: u32) -> Result<RgbImage> {
    if width <= 2 * MARGIN || height <= 2 * MARGIN {
        return Err(Error::config("plot is too small"));
    }
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if !xmin.is_finite() {
        return Err(Error::input("no finite points to plot"));
    }
    ymin = ymin.min(0.0);
    if xmax == xmin {
        xmax = xmin + 1.0;
    }
    if ymax == ymin {
        ymax = ymin + 1.0;
    }
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let (w, h) = ((width - 2 * MARGIN) as f64, (height - 2 * MARGIN) as f64);
    let to_px = |x: f64, y: f64| {
        (
            MARGIN as i64 + ((x - xmin) / (xmax - xmin) * w).round() as i64,
            (height - MARGIN) as i64 - ((y - ymin) / (ymax - ymin) * h).round() as i64,
        )
    };
    let axis = Rgb([0, 0, 0]);
    let origin = ((MARGIN) as i64, (height - MARGIN) as i64);
    line(&mut img, origin, ((width - MARGIN) as i64, origin.1), axis);
    line(&mut img, origin, (origin.0, MARGIN as i64), axis);
    for (i, s) in series.iter().enumerate() {
        let color = Rgb(PALETTE[i % PALETTE.len()]);
        for pair in s.points.windows(2) {
            line(&mut img, to_px(pair[0].0, pair[0].1), to_px(pair[1].0, pair[1].1), color);
        }
        let sx = MARGIN as i64 + 16 * i as i64;
        for dx in 0..10 {
            for dy in 0..10 {
                put(&mut img, sx + dx, 10 + dy, color);
            }
        }
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}
