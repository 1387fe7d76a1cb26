//! C ABI over the recognizer.
//!
//! Models and recognizers are opaque handles. Every call returns a
//! [`GsStatus`]; on failure [`gs_last_error`] gives the message for the
//! calling thread. A recognizer keeps its model alive, so the model handle
//! may be freed first.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use gesturespot::labels::StateLabel;
use gesturespot::persist::load_model;
use gesturespot::recognizer::{MetaState, Observation, Recognizer, RecognizerModel};
use gesturespot::signal::{frame_from_features, FEATURE_CHANNELS};
use gesturespot::Error;

/// Opaque trained model.
pub struct GsModel {
    inner: Arc<RecognizerModel>,
}

/// Opaque per-stream recognizer.
pub struct GsRecognizer {
    inner: Recognizer,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    ModelFormat = 4,
    Checksum = 5,
    Numeric = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsMeta {
    NoHand = 0,
    Posture = 1,
    Transition = 2,
}

/// Outcome of one frame. `emitted` is 0 during warm-up, when the other
/// fields are unspecified. `label` indexes [`gs_label_name`] and is -1 for
/// NoHand, as are both commands; `margin` is NaN then.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsStepResult {
    pub emitted: i32,
    pub meta: GsMeta,
    pub label: i32,
    pub raw_command: i32,
    pub command: i32,
    pub margin: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GsStatus {
    match e {
        Error::Io { .. } => GsStatus::Io,
        Error::Checksum(_) => GsStatus::Checksum,
        Error::ModelFormat(_) | Error::Parse { .. } => GsStatus::ModelFormat,
        Error::SingularGram | Error::NonFiniteInput | Error::ZeroNormal | Error::ZeroColumn(_) => GsStatus::Numeric,
        _ => GsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (GsStatus, String)>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GsStatus::Panic
        }
    }
}

fn fail(e: Error) -> (GsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GsStatus, String) {
    (GsStatus::NullPointer, format!("{what} is null"))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// excluding the terminator, or 0 when there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Loads a model directory written by `gesturespot train`.
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_model_load(dir: *const c_char, out: *mut *mut GsModel) -> GsStatus {
    guard(|| {
        if dir.is_null() {
            return Err(null("dir"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(dir).to_str().map_err(|e| (GsStatus::InvalidArgument, format!("dir is not UTF-8: {e}")))?;
        let model = load_model(path).map_err(fail)?;
        *out = Box::into_raw(Box::new(GsModel { inner: Arc::new(model) }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`gs_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gs_model_free(model: *mut GsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_model_window(model: *const GsModel, out: *mut usize) -> GsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.inner.window;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_recognizer_new(model: *const GsModel, out: *mut *mut GsRecognizer) -> GsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(GsRecognizer { inner: Recognizer::new(Arc::clone(&m.inner)) }));
        Ok(())
    })
}

/// # Safety
/// `rec` must come from [`gs_recognizer_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gs_recognizer_free(rec: *mut GsRecognizer) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Clears the window buffer and command filter.
///
/// # Safety
/// `rec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_recognizer_reset(rec: *mut GsRecognizer) -> GsStatus {
    guard(|| {
        rec.as_mut().ok_or_else(|| null("rec"))?.inner.reset();
        Ok(())
    })
}

/// Feeds one frame: six features `(n_x, n_y, n_z, roll, pitch, yaw)` and
/// the palm speed. With `present == 0` the features may be null.
///
/// # Safety
/// `rec` must be a live handle, `features` valid for six doubles when
/// present, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_recognizer_step(
    rec: *mut GsRecognizer,
    t: f64,
    features: *const f64,
    speed: f64,
    present: i32,
    out: *mut GsStepResult,
) -> GsStatus {
    guard(|| {
        let r = rec.as_mut().ok_or_else(|| null("rec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let obs = if present != 0 {
            if features.is_null() {
                return Err(null("features"));
            }
            let mut f = [0.0; FEATURE_CHANNELS];
            f.copy_from_slice(std::slice::from_raw_parts(features, FEATURE_CHANNELS));
            Observation::Present(frame_from_features(t, &f, speed).map_err(fail)?)
        } else {
            Observation::Absent { t }
        };
        let step = r.inner.step(obs).map_err(fail)?;
        let labels = StateLabel::all();
        *out = match step {
            None => GsStepResult { emitted: 0, meta: GsMeta::NoHand, label: -1, raw_command: -1, command: -1, margin: f64::NAN },
            Some(o) => GsStepResult {
                emitted: 1,
                meta: match o.meta {
                    MetaState::NoHand => GsMeta::NoHand,
                    MetaState::PostureState => GsMeta::Posture,
                    MetaState::TransitionState => GsMeta::Transition,
                },
                label: o.label.map_or(-1, |l| labels.iter().position(|&x| x == l).expect("listed") as i32),
                raw_command: o.raw_command.map_or(-1, |c| i32::from(u8::from(c))),
                command: o.command.map_or(-1, |c| i32::from(u8::from(c))),
                margin: o.margin.unwrap_or(f64::NAN),
            },
        };
        Ok(())
    })
}

/// Number of labels (5 postures then 8 gestures).
#[no_mangle]
pub extern "C" fn gs_label_count() -> usize {
    StateLabel::all().len()
}

static LABEL_NAMES: std::sync::OnceLock<Vec<CString>> = std::sync::OnceLock::new();

/// Static NUL-terminated name of label `index`, or null if out of range.
#[no_mangle]
pub extern "C" fn gs_label_name(index: i32) -> *const c_char {
    let names = LABEL_NAMES.get_or_init(|| StateLabel::all().iter().map(|l| CString::new(l.name()).expect("ascii")).collect());
    usize::try_from(index).ok().and_then(|i| names.get(i)).map_or(std::ptr::null(), |c| c.as_ptr())
}
