//! Procedural stand-in for the lecture recordings.
//!
//! Each subject follows a sticky random walk over behaviour annotations; the
//! engagement label of every frame comes from the cascade. Crops are rendered
//! from three class-conditional cues:
//!
//! * texture: grating orientation and frequency;
//! * lighting: sign of a vertical brightness ramp;
//! * colour: chroma of the grating, at equal luma for both classes.
//!
//! With `overlap = o` each cue independently shows the other class's
//! appearance with probability `o / 2`, so `o = 0` gives disjoint classes
//! and `o = 1` makes the classes indistinguishable. Cue draws persist while
//! the annotation persists, so neighbouring frames differ only by noise.

use image::{Rgb, RgbImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::annotation::{AnnotationRecord, BBox};
use super::crops::CropStore;
use crate::cascade::{ActionFlags, EngagementLabel, HeadPose, Posture};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub subjects: usize,
    pub frames_per_subject: usize,
    pub lectures: u32,
    pub crop_size: u32,
    /// Class overlap in [0, 1].
    pub overlap: f64,
    /// Probability that a frame repeats the previous frame's annotation.
    pub persistence: f64,
    /// Per-pixel Gaussian noise (in [0, 1] intensity units).
    pub noise: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            subjects: 10,
            frames_per_subject: 200,
            lectures: 1,
            crop_size: 64,
            overlap: 0.1,
            persistence: 0.8,
            noise: 0.03,
            frame_width: 1280,
            frame_height: 720,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.subjects == 0 || self.frames_per_subject == 0 || self.lectures == 0 {
            return bad("subjects, frames_per_subject and lectures must be positive");
        }
        if self.crop_size < 8 {
            return bad("crop_size must be at least 8");
        }
        if !(0.0..=1.0).contains(&self.overlap) || !(0.0..=1.0).contains(&self.persistence) {
            return bad("overlap and persistence must lie in [0, 1]");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be non-negative");
        }
        let (_, _, cell) = self.layout();
        if cell < 16 {
            return bad("frame too small to seat every subject");
        }
        Ok(())
    }

    /// Seating grid `(columns, rows, cell side)` in the lecture-hall frame.
    fn layout(&self) -> (u32, u32, u32) {
        let n = self.subjects as f64;
        let aspect = self.frame_width as f64 / self.frame_height.max(1) as f64;
        let cols = ((n * aspect).sqrt().ceil() as u32).clamp(1, self.subjects as u32);
        let n = self.subjects as u32;
        let rows = (n + cols - 1) / cols;
        let cell = (self.frame_width / cols).min(self.frame_height / rows);
        (cols, rows, cell)
    }

    pub fn subject_id(&self, s: usize) -> String {
        let width = self.subjects.to_string().len().max(2);
        format!("s{:0width$}", s + 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Appearance {
    texture: EngagementLabel,
    ramp: EngagementLabel,
    colour: EngagementLabel,
    angle_jitter: f64,
    period_jitter: f64,
    phase: f64,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, table: &[(T, f64)]) -> T {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for &(v, w) in table {
        if u < w {
            return v;
        }
        u -= w;
    }
    table.last().unwrap().0
}

fn draw_annotation(rng: &mut ChaCha8Rng) -> (ActionFlags, Posture, HeadPose) {
    let mut flip = |p: f64| rng.random::<f64>() < p;
    let actions = ActionFlags {
        writing: flip(0.22),
        cellphone: flip(0.14),
        laptop: false,
        talking: flip(0.12),
        raised_hand: flip(0.03),
        yawning: flip(0.04),
        head_on_desk: flip(0.03),
    };
    let posture = pick(
        rng,
        &[
            (Posture::Upright, 0.4),
            (Posture::LeaningForward, 0.2),
            (Posture::LeaningBack, 0.2),
            (Posture::LeaningLeft, 0.1),
            (Posture::LeaningRight, 0.1),
        ],
    );
    let head = pick(
        rng,
        &[
            (HeadPose::Forward, 0.45),
            (HeadPose::ModerateLeft, 0.08),
            (HeadPose::ModerateRight, 0.08),
            (HeadPose::OnDesk, 0.1),
            (HeadPose::FarLeft, 0.06),
            (HeadPose::FarRight, 0.06),
            (HeadPose::Up, 0.07),
            (HeadPose::BelowDesk, 0.1),
        ],
    );
    (actions, posture, head)
}

fn draw_appearance(rng: &mut ChaCha8Rng, label: EngagementLabel, overlap: f64) -> Appearance {
    let other = EngagementLabel::from_index(1 - label.index());
    let cue = |rng: &mut ChaCha8Rng| if rng.random::<f64>() < overlap / 2.0 { other } else { label };
    Appearance {
        texture: cue(rng),
        ramp: cue(rng),
        colour: cue(rng),
        angle_jitter: Normal::new(0.0, 0.15).unwrap().sample(rng),
        period_jitter: rng.random_range(0.9..1.1),
        phase: rng.random_range(0.0..std::f64::consts::TAU),
    }
}

// Both tints have luma 0.5 under ITU-R 601 weights.
const WARM: [f64; 3] = [1.0, 0.34, 0.0];
const COOL: [f64; 3] = [0.0, 0.55, 1.55];

fn render_crop(size: u32, base: [f64; 3], look: &Appearance, noise: f64, rng: &mut ChaCha8Rng) -> RgbImage {
    let interested = |c: EngagementLabel| c == EngagementLabel::Interested;
    let angle = if interested(look.texture) { 0.0 } else { std::f64::consts::FRAC_PI_2 } + look.angle_jitter;
    let period = if interested(look.texture) { 1.0 / 9.0 } else { 1.0 / 4.0 } * look.period_jitter;
    let ramp = if interested(look.ramp) { 0.18 } else { -0.18 };
    let tint = if interested(look.colour) { WARM } else { COOL };
    let (ca, sa) = (angle.cos(), angle.sin());
    let gauss = Normal::new(0.0, noise.max(1e-12)).unwrap();
    let s = size as f64;
    RgbImage::from_fn(size, size, |x, y| {
        let (u, v) = (x as f64 / s, y as f64 / s);
        let g = (std::f64::consts::TAU * (u * ca + v * sa) / period + look.phase).sin();
        let r = ramp * (2.0 * v - 1.0);
        let mut px = [0u8; 3];
        for c in 0..3 {
            let n = if noise > 0.0 { gauss.sample(rng) } else { 0.0 };
            let val = base[c] + r + 0.15 * g * tint[c] + n;
            px[c] = (val.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        Rgb(px)
    })
}

struct SubjectTrack {
    records: Vec<AnnotationRecord>,
    crops: Vec<RgbImage>,
}

fn generate_subject(config: &SyntheticConfig, lecture: u32, s: usize, stream: SeedStream) -> SubjectTrack {
    let mut rng = stream.named("annotations").rng();
    let base_seed = SeedStream::new(config.seed).named("identity").index(s as u64);
    let mut id_rng = base_seed.rng();
    let base = [id_rng.random_range(0.3..0.7), id_rng.random_range(0.3..0.7), id_rng.random_range(0.3..0.7)];

    let (cols, _, cell) = config.layout();
    let side = (cell as f64 * 0.75) as u32;
    let (col, row) = (s as u32 % cols, s as u32 / cols);
    let (cx, cy) = (col * cell + (cell - side) / 2, row * cell + (cell - side) / 2);
    let slack = ((cell - side) / 2).min(4) as i64;

    let mut records = Vec::with_capacity(config.frames_per_subject);
    let mut crops = Vec::with_capacity(config.frames_per_subject);
    let mut current: Option<((ActionFlags, Posture, HeadPose), Appearance)> = None;
    for f in 0..config.frames_per_subject {
        let keep = current.is_some() && rng.random::<f64>() < config.persistence;
        if !keep {
            let ann = draw_annotation(&mut rng);
            let label = crate::cascade::cascade_classify(&ann.0, ann.1, ann.2);
            current = Some((ann, draw_appearance(&mut rng, label, config.overlap)));
        }
        let ((actions, posture, head), look) = current.unwrap();
        let dx = rng.random_range(-slack..=slack);
        let dy = rng.random_range(-slack..=slack);
        let bbox = BBox::new((cx as i64 + dx) as u32, (cy as i64 + dy) as u32, side, side);
        let mut frame_rng = stream.named("pixels").index(f as u64).rng();
        crops.push(render_crop(config.crop_size, base, &look, config.noise, &mut frame_rng));
        records.push(AnnotationRecord {
            lecture_id: lecture,
            subject_id: config.subject_id(s),
            frame_index: f as u64,
            bbox,
            actions,
            posture,
            head,
        });
    }
    SubjectTrack { records, crops }
}

/// Annotations (sorted by key) and their crops.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(Vec<AnnotationRecord>, CropStore)> {
    config.validate()?;
    let root = SeedStream::new(config.seed).named("synth");
    let jobs: Vec<(u32, usize)> =
        (1..=config.lectures).flat_map(|l| (0..config.subjects).map(move |s| (l, s))).collect();
    let tracks: Vec<SubjectTrack> = jobs
        .par_iter()
        .map(|&(l, s)| generate_subject(config, l, s, root.index(l as u64).index(s as u64)))
        .collect();
    let mut store = CropStore::new(config.crop_size, config.crop_size);
    let mut records = Vec::new();
    for track in tracks {
        for (rec, crop) in track.records.into_iter().zip(track.crops) {
            store.insert(rec.key(), crop)?;
            records.push(rec);
        }
    }
    records.sort_by_key(|r| r.key());
    Ok((records, store))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig { subjects: 3, frames_per_subject: 12, crop_size: 16, seed: 5, ..Default::default() }
    }

    #[test]
    fn same_seed_same_output() {
        let (a, sa) = generate_synthetic(&small()).unwrap();
        let (b, sb) = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        let (c, _) = generate_synthetic(&SyntheticConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shapes_and_bounds() {
        let cfg = small();
        let (recs, store) = generate_synthetic(&cfg).unwrap();
        assert_eq!(recs.len(), 36);
        assert_eq!(store.len(), 36);
        for r in &recs {
            assert!(r.bbox.fits_within(cfg.frame_width, cfg.frame_height));
            assert!(!r.actions.laptop);
            store.get(&r.key()).unwrap();
        }
        assert_eq!(recs[0].subject_id, "s01");
    }

    #[test]
    fn tints_have_equal_luma() {
        let luma = |t: [f64; 3]| 0.299 * t[0] + 0.587 * t[1] + 0.114 * t[2];
        assert!((luma(WARM) - luma(COOL)).abs() < 2e-3);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_synthetic(&SyntheticConfig { overlap: 1.5, ..small() }).is_err());
        assert!(generate_synthetic(&SyntheticConfig { subjects: 0, ..small() }).is_err());
    }

    #[test]
    fn both_classes_appear() {
        let (recs, _) = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let pos = recs.iter().filter(|r| r.label() == EngagementLabel::Interested).count();
        let frac = pos as f64 / recs.len() as f64;
        assert!((0.25..0.75).contains(&frac), "interested fraction {frac}");
    }
}
