//! C ABI over `gesd-core`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every call returns a
//! [`GesdStatus`]; on failure the message is available from
//! [`gesd_last_error_message`] on the same thread. Strings returned through
//! `char **` must be released with [`gesd_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gesd_core::cli::{audit_file, load_split};
use gesd_core::config::ExperimentConfig;
use gesd_core::dataset::TabularDataset;
use gesd_core::metrics::{auc, dp_difference, mann_whitney_u, PredictionSet};
use gesd_core::models::Classifier;
use gesd_core::selection::hypervolume_3d;
use gesd_core::{ErrorKind, GesdError};

/// Status codes; 1 to 3 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GesdStatus {
    Ok = 0,
    ConfigError = 1,
    DataError = 2,
    NumericError = 3,
    NullPointer = 4,
    InvalidArgument = 5,
    Panic = 6,
}

/// Config plus its loaded train/test split.
pub struct GesdExperiment {
    config: ExperimentConfig,
    train: TabularDataset,
    test: TabularDataset,
}

pub struct GesdModel {
    inner: Classifier,
    path: PathBuf,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: GesdStatus, msg: impl Into<String>) -> GesdStatus {
    set_error(msg);
    status
}

fn from_error(e: GesdError) -> GesdStatus {
    let status = match e.kind() {
        ErrorKind::Config => GesdStatus::ConfigError,
        ErrorKind::Data => GesdStatus::DataError,
        ErrorKind::Numeric => GesdStatus::NumericError,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into [`GesdStatus::Panic`].
fn guard(f: impl FnOnce() -> GesdStatus) -> GesdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == GesdStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(GesdStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, GesdStatus> {
    if p.is_null() {
        return Err(fail(GesdStatus::NullPointer, "null path"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(GesdStatus::InvalidArgument, "path is not UTF-8")),
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize) -> Result<&'a [T], GesdStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(GesdStatus::NullPointer, "null array"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! core {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

macro_rules! out_ptr {
    ($p:expr) => {
        if $p.is_null() {
            return fail(GesdStatus::NullPointer, "null output pointer");
        }
    };
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn gesd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn gesd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a TOML experiment config, its CSV and the configured split.
#[no_mangle]
pub unsafe extern "C" fn gesd_experiment_load(config_path: *const c_char, out: *mut *mut GesdExperiment) -> GesdStatus {
    guard(|| {
        out_ptr!(out);
        let path = tri!(path_arg(config_path));
        let config = core!(ExperimentConfig::load(path));
        let (train, test) = core!(load_split(&config));
        *out = Box::into_raw(Box::new(GesdExperiment { config, train, test }));
        GesdStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn gesd_experiment_free(exp: *mut GesdExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Encoded feature count of the experiment's data.
#[no_mangle]
pub unsafe extern "C" fn gesd_experiment_n_features(exp: *const GesdExperiment, out: *mut usize) -> GesdStatus {
    guard(|| {
        out_ptr!(out);
        let Some(exp) = exp.as_ref() else {
            return fail(GesdStatus::NullPointer, "null experiment");
        };
        *out = exp.train.n_features();
        GesdStatus::Ok
    })
}

/// Copies the standardized test split: `features` must hold
/// `n_rows * n_features` doubles, `labels` and `groups` `n_rows` entries.
/// Pass NULL buffers to query `n_rows` only.
#[no_mangle]
pub unsafe extern "C" fn gesd_experiment_test_data(
    exp: *const GesdExperiment,
    features: *mut f64,
    labels: *mut u8,
    groups: *mut usize,
    n_rows: *mut usize,
) -> GesdStatus {
    guard(|| {
        out_ptr!(n_rows);
        let Some(exp) = exp.as_ref() else {
            return fail(GesdStatus::NullPointer, "null experiment");
        };
        let t = &exp.test;
        *n_rows = t.n_rows();
        if features.is_null() && labels.is_null() && groups.is_null() {
            return GesdStatus::Ok;
        }
        if features.is_null() || labels.is_null() || groups.is_null() {
            return fail(GesdStatus::NullPointer, "pass all three buffers or none");
        }
        ptr::copy_nonoverlapping(t.features().as_ptr(), features, t.features().len());
        ptr::copy_nonoverlapping(t.labels().as_ptr(), labels, t.n_rows());
        ptr::copy_nonoverlapping(t.groups().as_ptr(), groups, t.n_rows());
        GesdStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn gesd_model_load_json(path: *const c_char, out: *mut *mut GesdModel) -> GesdStatus {
    guard(|| {
        out_ptr!(out);
        let p = tri!(path_arg(path));
        let inner = core!(Classifier::load_json(&p));
        *out = Box::into_raw(Box::new(GesdModel { inner, path: p }));
        GesdStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn gesd_model_free(model: *mut GesdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gesd_model_n_features(model: *const GesdModel, out: *mut usize) -> GesdStatus {
    guard(|| {
        out_ptr!(out);
        let Some(m) = model.as_ref() else {
            return fail(GesdStatus::NullPointer, "null model");
        };
        *out = m.inner.input_dim();
        GesdStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn gesd_model_threshold(model: *const GesdModel, out: *mut f64) -> GesdStatus {
    guard(|| {
        out_ptr!(out);
        let Some(m) = model.as_ref() else {
            return fail(GesdStatus::NullPointer, "null model");
        };
        *out = m.inner.threshold;
        GesdStatus::Ok
    })
}

/// Scores `n_rows` row-major rows of the model's width into `out`.
#[no_mangle]
pub unsafe extern "C" fn gesd_model_predict_scores(
    model: *const GesdModel,
    rows: *const f64,
    n_rows: usize,
    out: *mut f64,
) -> GesdStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(GesdStatus::NullPointer, "null model");
        };
        let d = m.inner.input_dim();
        let x = tri!(slice_arg(rows, n_rows * d));
        if n_rows == 0 {
            return GesdStatus::Ok;
        }
        out_ptr!(out);
        let out = std::slice::from_raw_parts_mut(out, n_rows);
        for (o, row) in out.iter_mut().zip(x.chunks_exact(d)) {
            *o = core!(m.inner.predict_score(row));
        }
        GesdStatus::Ok
    })
}

/// Full audit of `model` on the experiment's test split; writes the
/// `audit.json` document to `*out_json`.
#[no_mangle]
pub unsafe extern "C" fn gesd_audit_json(
    exp: *const GesdExperiment,
    model: *const GesdModel,
    out_json: *mut *mut c_char,
) -> GesdStatus {
    guard(|| {
        out_ptr!(out_json);
        let (Some(exp), Some(m)) = (exp.as_ref(), model.as_ref()) else {
            return fail(GesdStatus::NullPointer, "null experiment or model");
        };
        let audit = core!(audit_file(&exp.config, &m.inner, Some(m.path.clone()), &exp.train, &exp.test));
        let text = core!(serde_json::to_string(&audit).map_err(GesdError::from));
        match CString::new(text) {
            Ok(s) => {
                *out_json = s.into_raw();
                GesdStatus::Ok
            }
            Err(_) => fail(GesdStatus::Panic, "audit JSON contains NUL"),
        }
    })
}

/// Rank AUC with half credit for ties; labels are 0/1.
#[no_mangle]
pub unsafe extern "C" fn gesd_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> GesdStatus {
    guard(|| {
        out_ptr!(out);
        let s = tri!(slice_arg(scores, n));
        let l = tri!(slice_arg(labels, n));
        *out = core!(auc(s, l));
        GesdStatus::Ok
    })
}

/// Demographic parity difference between groups 0 and 1.
#[no_mangle]
pub unsafe extern "C" fn gesd_dp_difference(
    predicted: *const u8,
    groups: *const usize,
    n: usize,
    out: *mut f64,
) -> GesdStatus {
    guard(|| {
        out_ptr!(out);
        let p = tri!(slice_arg(predicted, n)).to_vec();
        let g = tri!(slice_arg(groups, n)).to_vec();
        let set = core!(PredictionSet::from_predictions(p.clone(), p, g));
        *out = core!(dp_difference(&set));
        GesdStatus::Ok
    })
}

/// Two-sided Mann–Whitney test; `u` is the statistic of sample `a`.
/// `exact` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gesd_mann_whitney(
    a: *const f64,
    n_a: usize,
    b: *const f64,
    n_b: usize,
    u: *mut f64,
    p_value: *mut f64,
    exact: *mut bool,
) -> GesdStatus {
    guard(|| {
        out_ptr!(u);
        out_ptr!(p_value);
        let a = tri!(slice_arg(a, n_a));
        let b = tri!(slice_arg(b, n_b));
        let r = core!(mann_whitney_u(a, b));
        *u = r.u;
        *p_value = r.p_value;
        if !exact.is_null() {
            *exact = r.exact;
        }
        GesdStatus::Ok
    })
}

/// Exact hypervolume of `n` row-major 3-D points (minimization) against `reference[3]`.
#[no_mangle]
pub unsafe extern "C" fn gesd_hypervolume_3d(
    points: *const f64,
    n: usize,
    reference: *const f64,
    out: *mut f64,
) -> GesdStatus {
    guard(|| {
        out_ptr!(out);
        let flat = tri!(slice_arg(points, n * 3));
        let r = tri!(slice_arg(reference, 3));
        if r.len() != 3 {
            return fail(GesdStatus::NullPointer, "null reference point");
        }
        let pts: Vec<[f64; 3]> = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        *out = hypervolume_3d(&pts, [r[0], r[1], r[2]]);
        GesdStatus::Ok
    })
}
