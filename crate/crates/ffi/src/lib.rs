//! C ABI for loading trained checkpoints and running inference.
//!
//! Every fallible call returns a [`SkipnetStatus`]; on failure the message is
//! available from [`skipnet_last_error`] on the same thread. Handles are
//! opaque and must be released with [`skipnet_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use skipnet::dataset::detect_flat;
use skipnet::geometry::{farthest_point_sample, Point, PointCloud};
use skipnet::model::Model;
use skipnet::tensor::softmax;
use skipnet::training::load_checkpoint;
use skipnet::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Input = 5,
    Internal = 6,
}

/// Opaque trained model.
pub struct SkipnetModel {
    model: Model,
    class_names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SkipnetStatus {
    match e {
        Error::Checkpoint(_) => SkipnetStatus::Checkpoint,
        Error::Io(_) | Error::Ingestion { .. } => SkipnetStatus::Io,
        Error::Parameter(_) | Error::Config(_) | Error::Count { .. } | Error::Index { .. } => {
            SkipnetStatus::InvalidArgument
        }
        _ => SkipnetStatus::Input,
    }
}

/// Runs `f`, recording its error message and trapping panics.
fn guard(f: impl FnOnce() -> Result<(), (SkipnetStatus, String)>) -> SkipnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SkipnetStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SkipnetStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (SkipnetStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SkipnetStatus, String) {
    (SkipnetStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `points` must be null or point to `3 * n` readable doubles.
unsafe fn read_points(points: *const f64, n: usize) -> Result<Vec<Point>, (SkipnetStatus, String)> {
    if points.is_null() {
        return Err(null("points"));
    }
    let flat: &[f64] = std::slice::from_raw_parts(points, n * 3);
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn skipnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file into a new handle stored in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skipnet_model_load(path: *const c_char, out: *mut *mut SkipnetModel) -> SkipnetStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (SkipnetStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let ckpt = load_checkpoint(Path::new(path)).map_err(lib_err)?;
        let names = if ckpt.classes.is_empty() {
            (0..ckpt.model.config.n_classes).map(|i| format!("class_{i}")).collect()
        } else {
            ckpt.classes
        };
        let class_names = names.into_iter().map(|n| CString::new(n).unwrap_or_default()).collect();
        *out = Box::into_raw(Box::new(SkipnetModel {
            model: ckpt.model,
            class_names,
        }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from [`skipnet_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn skipnet_model_free(model: *mut SkipnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skipnet_model_num_classes(model: *const SkipnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.n_classes)
}

/// Trainable parameter count, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skipnet_model_param_count(model: *const SkipnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.param_count())
}

/// Name of class `index`, owned by the handle; null when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skipnet_model_class_name(model: *const SkipnetModel, index: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.class_names.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Classifies `n_points` xyz triples. Writes `num_classes` probabilities to
/// `probs` (may be null) and the arg-max class to `*label` (may be null).
///
/// # Safety
/// `points` must hold `3 * n_points` doubles, `probs` room for
/// `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn skipnet_model_classify(
    model: *const SkipnetModel,
    points: *const f64,
    n_points: usize,
    probs: *mut f64,
    probs_len: usize,
    label: *mut usize,
) -> SkipnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let k = m.model.config.n_classes;
        if !probs.is_null() && probs_len < k {
            return Err((
                SkipnetStatus::InvalidArgument,
                format!("probability buffer holds {probs_len} values, {k} needed"),
            ));
        }
        let cloud = PointCloud::new(read_points(points, n_points)?).map_err(lib_err)?;
        let p = softmax(&m.model.logits(&cloud).map_err(lib_err)?);
        if !probs.is_null() {
            std::slice::from_raw_parts_mut(probs, k).copy_from_slice(&p);
        }
        if !label.is_null() {
            *label = skipnet::model::argmax(&p);
        }
        Ok(())
    })
}

/// Sets `*flat` when the cloud's smallest-to-largest covariance eigenvalue
/// ratio is below `tau`.
///
/// # Safety
/// `points` must hold `3 * n_points` doubles and `flat` be valid.
#[no_mangle]
pub unsafe extern "C" fn skipnet_detect_flat(
    points: *const f64,
    n_points: usize,
    tau: f64,
    flat: *mut bool,
) -> SkipnetStatus {
    guard(|| {
        if flat.is_null() {
            return Err(null("flat"));
        }
        let cloud = PointCloud::new(read_points(points, n_points)?).map_err(lib_err)?;
        *flat = detect_flat(&cloud, tau).map_err(lib_err)?;
        Ok(())
    })
}

/// Farthest point sampling of `count` indices starting at `start`.
///
/// # Safety
/// `points` must hold `3 * n_points` doubles, `indices` room for `count`.
#[no_mangle]
pub unsafe extern "C" fn skipnet_farthest_point_sample(
    points: *const f64,
    n_points: usize,
    count: usize,
    start: usize,
    indices: *mut usize,
) -> SkipnetStatus {
    guard(|| {
        if indices.is_null() {
            return Err(null("indices"));
        }
        let pts = read_points(points, n_points)?;
        let picked = farthest_point_sample(&pts, count, start).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(indices, count).copy_from_slice(&picked);
        Ok(())
    })
}
