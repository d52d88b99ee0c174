//! C ABI over `binbrain`: load a checkpoint, classify RGB images, route
//! probability vectors to bin compartments.
//!
//! Every fallible call returns a [`BbStatus`]. On failure the message is
//! available from [`bb_last_error`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use binbrain::data::{normalize_image, square_resize, ChannelStats, Image};
use binbrain::model::checkpoint::peek_architecture;
use binbrain::model::{load_checkpoint, HeadMode, Model};
use binbrain::sort::{route, RouterConfig};
use binbrain::Error;

/// Result codes. `BB_STATUS_OK` is zero; everything else is a failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    CorruptCheckpoint = 4,
    ArchMismatch = 5,
    ShapeMismatch = 6,
    InvalidDistribution = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// A loaded classifier. Create with [`bb_model_load`], release with [`bb_model_free`].
pub struct BbModel {
    model: Model,
}

/// Routing outcome. `label` is -1 and `compartment` 0 for a reject;
/// `biodegradable` is 1, 0, or -1 when rejected.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbDecision {
    pub label: i32,
    pub compartment: u32,
    pub confidence: f64,
    pub biodegradable: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BbStatus {
    match e {
        Error::Io { .. } | Error::UnwritableDirectory { .. } => BbStatus::Io,
        Error::CorruptCheckpoint(_) => BbStatus::CorruptCheckpoint,
        Error::ArchMismatch(_) | Error::UnknownArchitecture(_) => BbStatus::ArchMismatch,
        Error::ShapeMismatch(_) | Error::SizeMismatch { .. } | Error::NotSquare(..) | Error::InvalidShape(_) => {
            BbStatus::ShapeMismatch
        }
        Error::InvalidDistribution(_) => BbStatus::InvalidDistribution,
        Error::InvalidArgument(_) => BbStatus::InvalidArgument,
        _ => BbStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (BbStatus, String)>) -> BbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside binbrain".into());
            BbStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (BbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (BbStatus, String) {
    (BbStatus::NullPointer, format!("{what} is null"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next `bb_*` call on the same thread.
#[no_mangle]
pub extern "C" fn bb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint written by `binbrain train`. On success `*out` owns a
/// new model.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_model_load(path: *const c_char, out: *mut *mut BbModel) -> BbStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (BbStatus::InvalidArgument, "path is not valid UTF-8".to_string()))?;
        let arch = peek_architecture(path).map_err(lib_err)?;
        let model = load_checkpoint(path, arch, &HeadMode::Strict { labels: None }).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BbModel { model }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`bb_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bb_model_free(model: *mut BbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bb_model_num_classes(model: *const BbModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_classes())
}

/// Side length of the square input the model was built for, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bb_model_input_size(model: *const BbModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_size())
}

/// Classifies one interleaved 8-bit RGB image of `width * height` pixels.
/// The image is center-cropped and resized to the model input, normalized
/// with the stored channel statistics, and the class probabilities are
/// written to `probs[0..num_classes]`.
///
/// # Safety
/// `rgb` must point to `3 * width * height` bytes and `probs` to `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bb_model_predict(
    model: *const BbModel,
    rgb: *const u8,
    width: usize,
    height: usize,
    probs: *mut f64,
    probs_len: usize,
) -> BbStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.model;
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        if probs.is_null() {
            return Err(null("probs"));
        }
        if probs_len < model.num_classes() {
            return Err((BbStatus::BufferTooSmall, format!("need {} slots, got {probs_len}", model.num_classes())));
        }
        let n = width.checked_mul(height).filter(|&n| n > 0);
        let n = n.ok_or_else(|| (BbStatus::InvalidArgument, format!("bad image size {width}x{height}")))?;
        let bytes = std::slice::from_raw_parts(rgb, 3 * n);
        let pixels = bytes.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
        let image = Image::new(width, height, pixels).map_err(lib_err)?;
        let size = model.input_size();
        let stats = model.channel_stats.unwrap_or(ChannelStats::IDENTITY);
        let x = normalize_image(&square_resize(&image, size), &stats, size)
            .and_then(|t| t.reshape(vec![1, 3, size, size]))
            .map_err(lib_err)?;
        let logp = model.predict(x).map_err(lib_err)?;
        let out = std::slice::from_raw_parts_mut(probs, model.num_classes());
        for (o, v) in out.iter_mut().zip(logp.data()) {
            *o = v.exp();
        }
        Ok(())
    })
}

/// Routes a four-class probability vector (glass, metal, paper, plastic)
/// with the default compartment map and biodegradable grouping.
///
/// # Safety
/// `probs` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bb_route(probs: *const f64, len: usize, threshold: f64, out: *mut BbDecision) -> BbStatus {
    guard(|| {
        if probs.is_null() {
            return Err(null("probs"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let config = RouterConfig { threshold, ..RouterConfig::default() };
        config.validate().map_err(lib_err)?;
        let d = route(std::slice::from_raw_parts(probs, len), &config).map_err(lib_err)?;
        *out = BbDecision {
            label: d.label.map_or(-1, |l| l as i32),
            compartment: d.compartment as u32,
            confidence: d.confidence,
            biodegradable: d.biodegradable.map_or(-1, i32::from),
        };
        Ok(())
    })
}
