//! Multi-frame image cubes.
//!
//! k RGB frames of one student are stacked along the channel axis, giving an
//! H×W×3k cube in which frame `j` occupies channels `3j..3j+2`. Pixels at the
//! same spatial position sit directly above each other across frames.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::annotation::AnnotationRecord;
use super::crops::CropStore;
use crate::cascade::EngagementLabel;
use crate::error::{Error, Result};

pub const CUBE_MAGIC: &[u8; 4] = b"WCUB";
pub const CUBE_VERSION: u16 = 1;

/// Row-major, channel-interleaved (HWC) cube of values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCube {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl ImageCube {
    pub fn frames(&self) -> usize {
        self.channels / 3
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copies frame `j` back out as an HWC RGB buffer.
    pub fn extract_frame(&self, j: usize) -> Vec<f32> {
        assert!(j < self.frames(), "frame {j} out of range");
        let mut out = Vec::with_capacity(self.height * self.width * 3);
        for px in self.data.chunks_exact(self.channels) {
            out.extend_from_slice(&px[3 * j..3 * j + 3]);
        }
        out
    }

    /// Writes the cube into `dst` in planar CHW order, subtracting `mean[c]`.
    pub fn write_chw(&self, mean: &[f32], dst: &mut [f32]) {
        let plane = self.height * self.width;
        debug_assert_eq!(dst.len(), plane * self.channels);
        for (p, px) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                dst[c * plane + p] = v - mean.get(c).copied().unwrap_or(0.0);
            }
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(CUBE_MAGIC)?;
        w.write_all(&CUBE_VERSION.to_le_bytes())?;
        for d in [self.height, self.width, self.channels] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<ImageCube> {
        let mut head = [0u8; 18];
        r.read_exact(&mut head).map_err(|e| Error::Format(format!("cube header: {e}")))?;
        if &head[..4] != CUBE_MAGIC {
            return Err(Error::Format("not a WCUB file".into()));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != CUBE_VERSION {
            return Err(Error::Format(format!("unsupported cube version {version}")));
        }
        let dim = |i: usize| u32::from_le_bytes(head[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
        let (height, width, channels) = (dim(0), dim(1), dim(2));
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::Format(format!("cube body: {e}")))?;
        if bytes.len() != height * width * channels * 4 {
            return Err(Error::Format(format!(
                "cube body holds {} bytes, expected {}",
                bytes.len(),
                height * width * channels * 4
            )));
        }
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(ImageCube { height, width, channels, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(18 + self.data.len() * 4);
        self.write_to(&mut buf).expect("in-memory write");
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ImageCube> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        ImageCube::read_from(std::io::BufReader::new(f))
    }
}

/// Stacks the crops of `records` (oldest first) into one cube.
pub fn build_cube(records: &[&AnnotationRecord], k: usize, store: &CropStore) -> Result<ImageCube> {
    if records.len() != k || k == 0 {
        return Err(Error::Shape(format!("expected {k} records for the cube, got {}", records.len())));
    }
    let subject = &records[0].subject_id;
    let lecture = records[0].lecture_id;
    for pair in records.windows(2) {
        if pair[1].subject_id != *subject || pair[1].lecture_id != lecture {
            return Err(Error::Shape("cube frames come from different subjects".into()));
        }
        if pair[1].frame_index <= pair[0].frame_index {
            return Err(Error::Shape(format!(
                "frame indices not strictly increasing ({} then {})",
                pair[0].frame_index, pair[1].frame_index
            )));
        }
    }
    let (w, h) = store.size();
    let (width, height, channels) = (w as usize, h as usize, 3 * k);
    let mut data = vec![0f32; width * height * channels];
    for (j, rec) in records.iter().enumerate() {
        let crop = store.get(&rec.key())?;
        if crop.dimensions() != (w, h) {
            return Err(Error::Shape(format!("crop {} has size {:?}", rec.key(), crop.dimensions())));
        }
        for (p, px) in crop.pixels().enumerate() {
            for c in 0..3 {
                data[p * channels + 3 * j + c] = px.0[c] as f32 / 255.0;
            }
        }
    }
    Ok(ImageCube { height, width, channels, data })
}

/// A classifier input: `k` consecutive frames of one subject, labelled by
/// the last (anchor) frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    /// Indices into the record list, oldest first; the last is the anchor.
    pub frames: Vec<usize>,
    pub label: EngagementLabel,
}

impl Sample {
    pub fn anchor(&self) -> usize {
        *self.frames.last().expect("non-empty sample")
    }
}

/// Builds one sample per record that has `k - 1` earlier annotated frames
/// of the same subject in the same lecture.
pub fn sequence_samples(records: &[AnnotationRecord], k: usize) -> Vec<Sample> {
    windows(records, k, 1)
}

/// Non-overlapping windows of `k` consecutive frames per track, so every
/// record belongs to at most one sample; a track's trailing remainder is
/// dropped.
pub fn tiled_samples(records: &[AnnotationRecord], k: usize) -> Vec<Sample> {
    windows(records, k, k)
}

fn windows(records: &[AnnotationRecord], k: usize, step: usize) -> Vec<Sample> {
    assert!(k >= 1 && step >= 1);
    let mut tracks: BTreeMap<(u32, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        tracks.entry((r.lecture_id, r.subject_id.as_str())).or_default().push(i);
    }
    let mut samples = Vec::new();
    for track in tracks.values_mut() {
        track.sort_by_key(|&i| records[i].frame_index);
        for window in track.windows(k).step_by(step) {
            let anchor = *window.last().unwrap();
            samples.push(Sample { frames: window.to_vec(), label: records[anchor].label() });
        }
    }
    samples.sort_by(|a, b| records[a.anchor()].key().cmp(&records[b.anchor()].key()));
    samples
}

pub fn sample_cube(sample: &Sample, records: &[AnnotationRecord], store: &CropStore) -> Result<ImageCube> {
    let recs: Vec<&AnnotationRecord> = sample.frames.iter().map(|&i| &records[i]).collect();
    build_cube(&recs, recs.len(), store)
}
