//! JSON Lines annotation files.
//!
//! One record per line:
//!
//! ```text
//! {"lecture_id":1,"subject_id":"s01","frame_index":0,"bbox":[10,20,96,96],
//!  "actions":{"writing":false,...},"posture":"upright","head_pose":"forward"}
//! ```
//!
//! Writing always emits fields in this order, so loading and re-saving a
//! canonical file reproduces it byte for byte.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cascade::{cascade_classify, deciding_rule, ActionFlags, EngagementLabel, HeadPose, Posture, Rule};
use crate::error::{Error, Result};

/// Pixel bounding box `(x, y, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BBox { x, y, w, h }
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.w > 0 && self.h > 0 && self.x as u64 + self.w as u64 <= width as u64 && self.y as u64 + self.h as u64 <= height as u64
    }
}

impl From<[u32; 4]> for BBox {
    fn from(v: [u32; 4]) -> Self {
        BBox { x: v[0], y: v[1], w: v[2], h: v[3] }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Identity of one student-frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub lecture_id: u32,
    pub subject_id: String,
    pub frame_index: u64,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}", self.lecture_id, self.subject_id, self.frame_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub lecture_id: u32,
    pub subject_id: String,
    pub frame_index: u64,
    pub bbox: BBox,
    pub actions: ActionFlags,
    pub posture: Posture,
    #[serde(rename = "head_pose")]
    pub head: HeadPose,
}

impl AnnotationRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            lecture_id: self.lecture_id,
            subject_id: self.subject_id.clone(),
            frame_index: self.frame_index,
        }
    }

    pub fn label(&self) -> EngagementLabel {
        cascade_classify(&self.actions, self.posture, self.head)
    }

    pub fn deciding_rule(&self) -> Rule {
        deciding_rule(&self.actions, self.posture, self.head)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActions {
    writing: bool,
    cellphone: bool,
    laptop: bool,
    talking: bool,
    raised_hand: bool,
    yawning: bool,
    head_on_desk: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    lecture_id: u32,
    subject_id: String,
    frame_index: u64,
    bbox: [u32; 4],
    actions: RawActions,
    posture: String,
    head_pose: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Drop records with the laptop flag set.
    pub exclude_laptop: bool,
    /// Source frame extents `(width, height)` that every bbox must fit in.
    pub frame_size: Option<(u32, u32)>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { exclude_laptop: true, frame_size: None }
    }
}

fn parse_line(line: &str, options: &LoadOptions) -> Result<AnnotationRecord> {
    let raw: RawRecord = serde_json::from_str(line)?;
    let a = raw.actions;
    let record = AnnotationRecord {
        lecture_id: raw.lecture_id,
        subject_id: raw.subject_id,
        frame_index: raw.frame_index,
        bbox: BBox::from(raw.bbox),
        actions: ActionFlags {
            writing: a.writing,
            cellphone: a.cellphone,
            laptop: a.laptop,
            talking: a.talking,
            raised_hand: a.raised_hand,
            yawning: a.yawning,
            head_on_desk: a.head_on_desk,
        },
        posture: raw.posture.parse()?,
        head: raw.head_pose.parse()?,
    };
    let (fw, fh) = options.frame_size.unwrap_or((u32::MAX, u32::MAX));
    if !record.bbox.fits_within(fw, fh) {
        return Err(Error::InvalidRecord(format!("bbox {:?} is empty or outside the {fw}x{fh} frame", record.bbox)));
    }
    if record.subject_id.is_empty() {
        return Err(Error::InvalidRecord("empty subject_id".into()));
    }
    Ok(record)
}

/// Parses annotation text; `origin` is only used in error messages.
pub fn parse_annotations(text: &str, origin: &Path, options: &LoadOptions) -> Result<Vec<AnnotationRecord>> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at_line = |source: Error| Error::Line { path: origin.to_path_buf(), line: i + 1, source: Box::new(source) };
        let record = parse_line(line, options).map_err(at_line)?;
        if !seen.insert(record.key()) {
            return Err(at_line(Error::DuplicateKey {
                lecture_id: record.lecture_id,
                subject_id: record.subject_id,
                frame_index: record.frame_index,
            }));
        }
        if options.exclude_laptop && record.actions.laptop {
            continue;
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_annotations(path: &Path, options: &LoadOptions) -> Result<Vec<AnnotationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path, options)
}

pub fn to_jsonl(records: &[AnnotationRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let text = to_jsonl(records)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
