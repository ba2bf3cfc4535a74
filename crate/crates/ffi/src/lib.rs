//! C interface to the `wits` engagement toolkit.
//!
//! Every fallible call returns a [`WitsStatus`]; on failure the message is
//! available from [`wits_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use wits::cascade::{cascade_classify, ActionFlags, EngagementLabel, HeadPose, Posture};
use wits::dataset::{BBox, ImageCube};
use wits::eval::Trained;
use wits::interest_map::{render_overlay, MapSettings, StudentScore};
use wits::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Posture codes accepted by [`wits_cascade_classify`].
#[repr(C)]
pub enum WitsPosture {
    LeaningLeft = 0,
    LeaningRight = 1,
    LeaningBack = 2,
    LeaningForward = 3,
    Upright = 4,
}

/// Head pose codes accepted by [`wits_cascade_classify`].
#[repr(C)]
pub enum WitsHeadPose {
    FarLeft = 0,
    FarRight = 1,
    ModerateLeft = 2,
    ModerateRight = 3,
    BelowDesk = 4,
    OnDesk = 5,
    Up = 6,
    Forward = 7,
}

/// Action bits for [`wits_cascade_classify`].
pub const WITS_ACTION_WRITING: u8 = 1;
pub const WITS_ACTION_CELLPHONE: u8 = 1 << 1;
pub const WITS_ACTION_LAPTOP: u8 = 1 << 2;
pub const WITS_ACTION_TALKING: u8 = 1 << 3;
pub const WITS_ACTION_RAISED_HAND: u8 = 1 << 4;
pub const WITS_ACTION_YAWNING: u8 = 1 << 5;
pub const WITS_ACTION_HEAD_ON_DESK: u8 = 1 << 6;

/// One student box for [`wits_render_overlay`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WitsScore {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    /// Probability of not being interested, in [0, 1].
    pub disengagement: f64,
}

/// A loaded classifier.
pub struct WitsModel {
    inner: Trained,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WitsStatus {
    match e {
        Error::Io { .. } => WitsStatus::Io,
        Error::Shape(_) => WitsStatus::Shape,
        Error::Numeric(_) => WitsStatus::Numeric,
        Error::Format(_) | Error::Json(_) | Error::Image(_) | Error::Parse { .. } => WitsStatus::Format,
        _ => WitsStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (WitsStatus, String)>) -> WitsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WitsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            WitsStatus::Panic
        }
    }
}

fn lift(e: Error) -> (WitsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (WitsStatus, String) {
    (WitsStatus::NullArgument, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wits_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wits_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Labels one annotation. `out_interested` receives 1 for Interested, 0 otherwise.
///
/// # Safety
/// `out_interested` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn wits_cascade_classify(actions: u8, posture: u32, head: u32, out_interested: *mut i32) -> WitsStatus {
    guard(|| {
        if out_interested.is_null() {
            return Err(null("out_interested"));
        }
        if actions >> ActionFlags::COUNT != 0 {
            return Err((WitsStatus::InvalidArgument, format!("unknown action bits {actions:#x}")));
        }
        let p = *Posture::ALL.get(posture as usize).ok_or((WitsStatus::InvalidArgument, format!("posture code {posture}")))?;
        let h = *HeadPose::ALL.get(head as usize).ok_or((WitsStatus::InvalidArgument, format!("head pose code {head}")))?;
        let label = cascade_classify(&ActionFlags::from_bits(actions), p, h);
        *out_interested = (label == EngagementLabel::Interested) as i32;
        Ok(())
    })
}

/// Loads a CNN checkpoint or SVM model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wits_model_load(path: *const c_char, out: *mut *mut WitsModel) -> WitsStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path).to_str().map_err(|e| (WitsStatus::InvalidArgument, e.to_string()))?;
        let inner = Trained::load(Path::new(path)).map_err(lift)?;
        *out = Box::into_raw(Box::new(WitsModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`wits_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wits_model_free(model: *mut WitsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input geometry the model expects; any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn wits_model_input(model: *const WitsModel, width: *mut u32, height: *mut u32, frames: *mut u32) -> WitsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let (w, h) = m.inner.input_size();
        for (dst, v) in [(width, w), (height, h), (frames, m.inner.frames() as u32)] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// Disengagement probability for `count` cubes laid out back to back, each
/// height × width × 3·frames floats in [0, 1], row-major with interleaved
/// channels.
///
/// # Safety
/// `cubes` must hold `count` cubes of the model's geometry and
/// `out_disengagement` room for `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn wits_model_predict(
    model: *const WitsModel,
    cubes: *const f32,
    count: usize,
    out_disengagement: *mut f64,
) -> WitsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if count == 0 {
            return Ok(());
        }
        if cubes.is_null() {
            return Err(null("cubes"));
        }
        if out_disengagement.is_null() {
            return Err(null("out_disengagement"));
        }
        let (w, h) = m.inner.input_size();
        let channels = 3 * m.inner.frames();
        let len = w as usize * h as usize * channels;
        let data = std::slice::from_raw_parts(cubes, len * count);
        let batch: Vec<ImageCube> = data
            .chunks_exact(len)
            .map(|c| ImageCube { height: h as usize, width: w as usize, channels, data: c.to_vec() })
            .collect();
        let d = m.inner.disengagement(&batch).map_err(lift)?;
        std::slice::from_raw_parts_mut(out_disengagement, count).copy_from_slice(&d);
        Ok(())
    })
}

/// Renders the heat overlay into `out_rgba` (width × height × 4 bytes).
/// `settings_json` may be null for the defaults.
///
/// # Safety
/// `scores` must hold `count` entries, `settings_json` must be null or a
/// NUL-terminated string, and `out_rgba` must hold `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn wits_render_overlay(
    width: u32,
    height: u32,
    scores: *const WitsScore,
    count: usize,
    settings_json: *const c_char,
    out_rgba: *mut u8,
    out_len: usize,
) -> WitsStatus {
    guard(|| {
        if out_rgba.is_null() {
            return Err(null("out_rgba"));
        }
        if count > 0 && scores.is_null() {
            return Err(null("scores"));
        }
        let needed = width as usize * height as usize * 4;
        if out_len < needed {
            return Err((WitsStatus::BufferTooSmall, format!("need {needed} bytes, got {out_len}")));
        }
        let settings: MapSettings = if settings_json.is_null() {
            MapSettings::default()
        } else {
            let text = CStr::from_ptr(settings_json).to_str().map_err(|e| (WitsStatus::InvalidArgument, e.to_string()))?;
            serde_json::from_str(text).map_err(|e| lift(e.into()))?
        };
        let scores: Vec<StudentScore> = if count == 0 { &[][..] } else { std::slice::from_raw_parts(scores, count) }
            .iter()
            .enumerate()
            .map(|(i, s)| StudentScore {
                subject_id: i.to_string(),
                bbox: BBox::new(s.x, s.y, s.width, s.height),
                disengagement: s.disengagement,
            })
            .collect();
        let img = render_overlay(width, height, &scores, &settings).map_err(lift)?;
        std::slice::from_raw_parts_mut(out_rgba, needed).copy_from_slice(img.as_raw());
        Ok(())
    })
}
