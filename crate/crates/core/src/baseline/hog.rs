//! Histogram of oriented gradients on single grayscale frames.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogConfig {
    /// Cell edge in pixels.
    pub cell: usize,
    /// Block edge in cells.
    pub block: usize,
    /// Block step in cells.
    pub block_stride: usize,
    pub bins: usize,
    /// Orientations over [0, 2π) instead of [0, π).
    pub signed: bool,
    /// L2-Hys clipping threshold.
    pub clip: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig { cell: 8, block: 2, block_stride: 1, bins: 9, signed: false, clip: 0.2 }
    }
}

/// Added under the square root of block norms.
const EPS: f64 = 1e-3;

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell == 0 || self.block == 0 || self.block_stride == 0 || self.bins < 2 {
            return Err(Error::Config("HOG cell, block and stride must be positive and bins at least 2".into()));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config("HOG clip must be positive".into()));
        }
        Ok(())
    }

    /// `(cells_x, cells_y, blocks_x, blocks_y)` for an image.
    pub fn grid(&self, width: usize, height: usize) -> Result<(usize, usize, usize, usize)> {
        self.validate()?;
        if width % self.cell != 0 || height % self.cell != 0 {
            return Err(Error::Shape(format!("{width}×{height} is not divisible into {}-pixel cells", self.cell)));
        }
        let (cx, cy) = (width / self.cell, height / self.cell);
        if cx < self.block || cy < self.block {
            return Err(Error::Shape(format!("{cx}×{cy} cells cannot hold a {}-cell block", self.block)));
        }
        Ok((cx, cy, (cx - self.block) / self.block_stride + 1, (cy - self.block) / self.block_stride + 1))
    }

    pub fn descriptor_len(&self, width: usize, height: usize) -> Result<usize> {
        let (_, _, bx, by) = self.grid(width, height)?;
        Ok(bx * by * self.block * self.block * self.bins)
    }
}

/// ITU-R BT.601 luma of an interleaved RGB buffer.
pub fn luma(rgb: &[f32]) -> Vec<f32> {
    rgb.chunks_exact(3).map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect()
}

/// HOG descriptor of a row-major grayscale image. Gradients use the
/// centred `[-1, 0, 1]` filter with edge replication; each pixel votes its
/// magnitude into the two nearest orientation bins of its own cell; blocks
/// are L2-Hys normalised and concatenated in row-major block order.
pub fn hog(gray: &[f32], width: usize, height: usize, config: &HogConfig) -> Result<Vec<f32>> {
    let (cx, cy, bx, by) = config.grid(width, height)?;
    if gray.len() != width * height {
        return Err(Error::Shape(format!("{} pixels for a {width}×{height} image", gray.len())));
    }
    let bins = config.bins;
    let range = if config.signed { 2.0 * PI } else { PI };
    let bin_width = range / bins as f64;
    let px = |x: isize, y: isize| -> f64 {
        let x = x.clamp(0, width as isize - 1) as usize;
        let y = y.clamp(0, height as isize - 1) as usize;
        gray[y * width + x] as f64
    };

    let mut cells = vec![0.0f64; cx * cy * bins];
    for y in 0..height {
        for x in 0..width {
            let (xi, yi) = (x as isize, y as isize);
            let gx = px(xi + 1, yi) - px(xi - 1, yi);
            let gy = px(xi, yi + 1) - px(xi, yi - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(range);
            // Bin b is centred on (b + 0.5)·width; votes split linearly between the two nearest centres.
            let pos = angle / bin_width - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as isize).rem_euclid(bins as isize) as usize;
            let b1 = (b0 + 1) % bins;
            let cell = ((y / config.cell) * cx + x / config.cell) * bins;
            cells[cell + b0] += mag * (1.0 - frac);
            cells[cell + b1] += mag * frac;
        }
    }

    let block_len = config.block * config.block * bins;
    let mut out = Vec::with_capacity(bx * by * block_len);
    let mut v = vec![0.0f64; block_len];
    for byi in 0..by {
        for bxi in 0..bx {
            v.clear();
            for j in 0..config.block {
                for i in 0..config.block {
                    let c = ((byi * config.block_stride + j) * cx + bxi * config.block_stride + i) * bins;
                    v.extend_from_slice(&cells[c..c + bins]);
                }
            }
            l2_hys(&mut v, config.clip);
            out.extend(v.iter().map(|&x| x as f32));
        }
    }
    Ok(out)
}

fn l2_hys(v: &mut [f64], clip: f64) {
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + EPS * EPS).sqrt();
    v.iter_mut().for_each(|x| *x = (*x / norm).min(clip));
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + EPS * EPS).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_gives_zero_descriptor() {
        let cfg = HogConfig::default();
        let d = hog(&vec![0.4; 32 * 24], 32, 24, &cfg).unwrap();
        assert_eq!(d.len(), cfg.descriptor_len(32, 24).unwrap());
        assert_eq!(d.len(), 3 * 2 * 4 * 9);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_edge_votes_vertical_gradient_bin() {
        let (w, h) = (16, 16);
        let img: Vec<f32> = (0..w * h).map(|i| if i / w >= 8 { 1.0 } else { 0.0 }).collect();
        let cfg = HogConfig { block: 1, ..HogConfig::default() };
        let d = hog(&img, w, h, &cfg).unwrap();
        // Gradient points along +y: angle π/2, the centre of bin 4 of 9.
        for cell in d.chunks(9) {
            for (b, &v) in cell.iter().enumerate() {
                if b != 4 {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert!(d.chunks(9).any(|c| c[4] > 0.9));
    }

    #[test]
    fn size_errors() {
        let cfg = HogConfig::default();
        assert!(hog(&[0.0; 30 * 32], 30, 32, &cfg).is_err());
        assert!(hog(&[0.0; 8 * 8], 8, 8, &cfg).is_err());
        assert!(hog(&[0.0; 10], 16, 16, &cfg).is_err());
        assert!(HogConfig { bins: 1, ..cfg }.validate().is_err());
    }

    #[test]
    fn l2_hys_bounds() {
        let mut v = vec![10.0, 0.0, 0.0, 0.1];
        l2_hys(&mut v, 0.2);
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-3);
    }

    #[test]
    fn luma_weights() {
        assert_eq!(luma(&[1.0, 1.0, 1.0]), vec![1.0]);
        assert!((luma(&[1.0, 0.0, 0.0])[0] - 0.299).abs() < 1e-7);
    }
}
