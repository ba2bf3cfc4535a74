//! Heat overlay marking disengaged students on a lecture-hall frame.
//!
//! Each student contributes `d · w(p)` at pixel `p`, where `d` is the
//! disengagement score and `w` a Gaussian-feathered rounded-box mask. The
//! overlay takes the per-pixel maximum of those contributions, then colours
//! it from a gradient with alpha `max_alpha · value`.

use image::{ImageEncoder, Rgb, RgbImage, Rgba, RgbaImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dataset::BBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentScore {
    pub subject_id: String,
    pub bbox: BBox,
    /// Probability of ¬Interested.
    pub disengagement: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientStop {
    pub at: f64,
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    /// Colours by disengagement, positions strictly increasing in [0, 1].
    /// Transparency comes from `max_alpha`, so a score of 0 is invisible
    /// whatever the first colour.
    pub gradient: Vec<GradientStop>,
    pub max_alpha: f64,
    /// Smoothing time constant in frames; 0 disables smoothing.
    pub tau: f64,
    /// Feather width in pixels; the Gaussian has sigma `blur_radius / 3`
    /// and is cut off beyond `blur_radius`.
    pub blur_radius: f64,
    /// Corner radius as a fraction of the shorter box side.
    pub corner_radius: f64,
}

impl Default for MapSettings {
    fn default() -> Self {
        MapSettings {
            gradient: vec![
                GradientStop { at: 0.0, rgb: [255, 255, 0] },
                GradientStop { at: 0.5, rgb: [255, 140, 0] },
                GradientStop { at: 1.0, rgb: [220, 0, 0] },
            ],
            max_alpha: 0.6,
            tau: 30.0,
            blur_radius: 6.0,
            corner_radius: 0.2,
        }
    }
}

impl MapSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("interest map: {m}")));
        if self.gradient.is_empty() {
            return bad("gradient needs at least one stop");
        }
        if self.gradient.iter().any(|s| !(0.0..=1.0).contains(&s.at)) || self.gradient.windows(2).any(|w| w[0].at >= w[1].at) {
            return bad("gradient stops must increase strictly within [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.max_alpha) {
            return bad("max_alpha must lie in [0, 1]");
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) || !(self.blur_radius >= 0.0 && self.blur_radius.is_finite()) {
            return bad("tau and blur_radius must be finite and non-negative");
        }
        if !(0.0..=0.5).contains(&self.corner_radius) {
            return bad("corner_radius must lie in [0, 0.5]");
        }
        Ok(())
    }

    pub fn colour(&self, value: f64) -> [u8; 3] {
        let g = &self.gradient;
        let hi = g.partition_point(|s| s.at <= value);
        if hi == 0 {
            return g[0].rgb;
        }
        if hi == g.len() {
            return g[hi - 1].rgb;
        }
        let (a, b) = (&g[hi - 1], &g[hi]);
        let t = (value - a.at) / (b.at - a.at);
        std::array::from_fn(|c| (a.rgb[c] as f64 + t * (b.rgb[c] as f64 - a.rgb[c] as f64)).round() as u8)
    }
}

/// One step of an exponential moving average with `λ = 1 − exp(−1/τ)`.
pub fn smooth(previous: f64, new: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return new;
    }
    let lambda = 1.0 - (-1.0 / tau).exp();
    (lambda * new + (1.0 - lambda) * previous).clamp(0.0, 1.0)
}

/// Per-student smoothing across frames. A student's first score is taken
/// as is, so a constant stream is reproduced exactly from the start.
#[derive(Debug, Clone, Default)]
pub struct Smoother {
    pub tau: f64,
    state: BTreeMap<String, f64>,
}

impl Smoother {
    pub fn new(tau: f64) -> Self {
        Smoother { tau, state: BTreeMap::new() }
    }

    pub fn update(&mut self, scores: &[StudentScore]) -> Vec<StudentScore> {
        scores
            .iter()
            .map(|s| {
                let v = match self.state.get(&s.subject_id) {
                    Some(&prev) => smooth(prev, s.disengagement, self.tau),
                    None => s.disengagement,
                };
                self.state.insert(s.subject_id.clone(), v);
                StudentScore { disengagement: v, ..s.clone() }
            })
            .collect()
    }
}

struct Shape {
    cx: f64,
    cy: f64,
    hx: f64,
    hy: f64,
    radius: f64,
    score: f64,
    /// Inclusive pixel bounds of the feathered footprint.
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl Shape {
    fn new(s: &StudentScore, settings: &MapSettings, width: u32, height: u32) -> Shape {
        let b = &s.bbox;
        let (hx, hy) = (b.w as f64 / 2.0, b.h as f64 / 2.0);
        let reach = settings.blur_radius.ceil() as i64;
        let clamp = |v: i64, hi: u32| v.clamp(0, hi as i64 - 1) as usize;
        Shape {
            cx: b.x as f64 + hx,
            cy: b.y as f64 + hy,
            hx,
            hy,
            radius: settings.corner_radius * 2.0 * hx.min(hy),
            score: s.disengagement,
            x0: clamp(b.x as i64 - reach, width),
            x1: clamp((b.x + b.w) as i64 + reach, width),
            y0: clamp(b.y as i64 - reach, height),
            y1: clamp((b.y + b.h) as i64 + reach, height),
        }
    }

    /// Signed distance from a pixel centre to the rounded box edge, negative inside.
    fn distance(&self, x: usize, y: usize) -> f64 {
        let qx = (x as f64 + 0.5 - self.cx).abs() - (self.hx - self.radius);
        let qy = (y as f64 + 0.5 - self.cy).abs() - (self.hy - self.radius);
        qx.max(0.0).hypot(qy.max(0.0)) + qx.max(qy).min(0.0) - self.radius
    }
}

fn feather(distance: f64, blur_radius: f64) -> f64 {
    if blur_radius == 0.0 {
        return if distance < 0.0 { 1.0 } else { 0.0 };
    }
    if distance > blur_radius {
        return 0.0;
    }
    let sigma = blur_radius / 3.0;
    0.5 * libm::erfc(distance / (sigma * std::f64::consts::SQRT_2))
}

fn validate_scores(scores: &[StudentScore], width: u32, height: u32) -> Result<()> {
    for s in scores {
        if !(0.0..=1.0).contains(&s.disengagement) {
            return Err(Error::InvalidRecord(format!("{}: disengagement {} outside [0, 1]", s.subject_id, s.disengagement)));
        }
        if s.bbox.w == 0 || s.bbox.h == 0 || !s.bbox.fits_within(width, height) {
            return Err(Error::InvalidRecord(format!("{}: box {:?} outside the {width}x{height} frame", s.subject_id, s.bbox)));
        }
    }
    Ok(())
}

/// Per-pixel overlay value in [0, 1], row-major.
pub fn overlay_values(width: u32, height: u32, scores: &[StudentScore], settings: &MapSettings) -> Result<Vec<f64>> {
    settings.validate()?;
    validate_scores(scores, width, height)?;
    let shapes: Vec<Shape> = scores.iter().map(|s| Shape::new(s, settings, width, height)).collect();
    let mut values = vec![0.0; width as usize * height as usize];
    if width == 0 {
        return Ok(values);
    }
    values.par_chunks_mut(width as usize).enumerate().for_each(|(y, row)| {
        for s in shapes.iter().filter(|s| s.score > 0.0 && (s.y0..=s.y1).contains(&y)) {
            for (x, v) in row.iter_mut().enumerate().take(s.x1 + 1).skip(s.x0) {
                *v = v.max(s.score * feather(s.distance(x, y), settings.blur_radius));
            }
        }
    });
    Ok(values)
}

pub fn render_overlay(width: u32, height: u32, scores: &[StudentScore], settings: &MapSettings) -> Result<RgbaImage> {
    let values = overlay_values(width, height, scores, settings)?;
    let mut img = RgbaImage::new(width, height);
    for (px, &v) in img.pixels_mut().zip(&values) {
        if v > 0.0 {
            let [r, g, b] = settings.colour(v);
            *px = Rgba([r, g, b, (255.0 * settings.max_alpha * v).round() as u8]);
        }
    }
    Ok(img)
}

/// Alpha-composites the overlay over an opaque background frame.
pub fn render_onto(background: &RgbImage, scores: &[StudentScore], settings: &MapSettings) -> Result<RgbaImage> {
    let overlay = render_overlay(background.width(), background.height(), scores, settings)?;
    let mut out = RgbaImage::new(background.width(), background.height());
    for ((dst, Rgb(bg)), Rgba(ov)) in out.pixels_mut().zip(background.pixels()).zip(overlay.pixels()) {
        let a = ov[3] as f64 / 255.0;
        let mix = |c: usize| (ov[c] as f64 * a + bg[c] as f64 * (1.0 - a)).round() as u8;
        *dst = Rgba([mix(0), mix(1), mix(2), 255]);
    }
    Ok(out)
}

pub fn encode_png(img: &RgbaImage) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    image::codecs::png::PngEncoder::new(&mut bytes).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgba8,
    )?;
    Ok(bytes)
}

/// Scores accompanying one rendered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub frame: usize,
    pub width: u32,
    pub height: u32,
    pub settings: MapSettings,
    pub scores: Vec<StudentScore>,
}
