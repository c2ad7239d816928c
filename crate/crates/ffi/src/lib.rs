//! C ABI for the modrec toolkit: opaque handles, integer error codes, and
//! a thread-local error message. All functions are panic-safe; a caught
//! panic reports `MODREC_ERR_INTERNAL` instead of unwinding across the
//! boundary.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_double, c_float};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use modrec::features::global::{compute_order_stats, hoc_features, DEFAULT_QUANTILES};
use modrec::features::local::{encode_instance, load_dictionary_pair, GmmDictionary};
use modrec::features::FeatureTag;
use modrec::iq::{to_polar, InstanceMeta, IqInstance, IqSample, Modulation};
use modrec::sim::{generate_instance, SimConfig};
use modrec::svm::{predict, SvmModel};
use modrec::Error;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModrecStatus {
    ModrecOk = 0,
    /// A pointer argument was null or a value argument was out of range.
    ModrecErrInvalidArg = 1,
    /// File could not be read or written.
    ModrecErrIo = 2,
    /// File contents were not in the expected format.
    ModrecErrFormat = 3,
    /// The input data was degenerate (empty, non-finite, too short).
    ModrecErrData = 4,
    /// An internal invariant failed.
    ModrecErrInternal = 5,
}

/// Feature family selector for extraction.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModrecFamily {
    ModrecFamilyHoc = 0,
    ModrecFamilyOs = 1,
    ModrecFamilyLp = 2,
    ModrecFamilyLpHoc = 3,
}

/// Opaque handle to an (amplitude, phase) dictionary pair.
pub struct ModrecDict {
    amplitude: GmmDictionary,
    phase: GmmDictionary,
}

/// Opaque handle to a trained classifier.
pub struct ModrecModel {
    model: SvmModel,
    class_names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> ModrecStatus {
    match err {
        Error::Io(_) => ModrecStatus::ModrecErrIo,
        Error::FormatError(_) | Error::TruncatedFile | Error::TagMismatch { .. } => {
            ModrecStatus::ModrecErrFormat
        }
        Error::ConfigError(_)
        | Error::UnsupportedModulation(_)
        | Error::DimensionMismatch { .. } => ModrecStatus::ModrecErrInvalidArg,
        _ => ModrecStatus::ModrecErrData,
    }
}

fn fail(err: &Error) -> ModrecStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn invalid(msg: &str) -> ModrecStatus {
    set_error(msg);
    ModrecStatus::ModrecErrInvalidArg
}

/// Run `f` with panics converted to `MODREC_ERR_INTERNAL`.
fn guarded(f: impl FnOnce() -> ModrecStatus) -> ModrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            ModrecStatus::ModrecErrInternal
        }
    }
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Option<&'a Path> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok().map(Path::new)
}

fn instance_from_iq(iq: *const c_float, n_samples: usize) -> Result<IqInstance, ModrecStatus> {
    if iq.is_null() || n_samples == 0 {
        return Err(invalid("iq pointer is null or empty"));
    }
    let raw = unsafe { std::slice::from_raw_parts(iq, 2 * n_samples) };
    let samples: Vec<IqSample> = raw
        .chunks_exact(2)
        .map(|p| IqSample { i: p[0] as f64, q: p[1] as f64 })
        .collect();
    IqInstance::new(samples, InstanceMeta::unknown()).map_err(|e| fail(&e))
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn modrec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load an (amplitude, phase) dictionary pair from a directory containing
/// `amplitude.json` and `phase.json`.
#[no_mangle]
pub unsafe extern "C" fn modrec_dict_load(
    dir: *const c_char,
    out: *mut *mut ModrecDict,
) -> ModrecStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out pointer is null");
        }
        let Some(dir) = path_arg(dir) else { return invalid("dir is null or not UTF-8") };
        match load_dictionary_pair(dir) {
            Ok((amplitude, phase)) => {
                *out = Box::into_raw(Box::new(ModrecDict { amplitude, phase }));
                ModrecStatus::ModrecOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a dictionary handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn modrec_dict_free(dict: *mut ModrecDict) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// Shingle length of a loaded dictionary.
#[no_mangle]
pub unsafe extern "C" fn modrec_dict_shingle_len(dict: *const ModrecDict) -> usize {
    if dict.is_null() {
        return 0;
    }
    (*dict).amplitude.l
}

/// Component count of a loaded dictionary.
#[no_mangle]
pub unsafe extern "C" fn modrec_dict_size(dict: *const ModrecDict) -> usize {
    if dict.is_null() {
        return 0;
    }
    (*dict).amplitude.k
}

/// Load a classifier from a `model.json` file (or a directory holding one).
#[no_mangle]
pub unsafe extern "C" fn modrec_model_load(
    path: *const c_char,
    out: *mut *mut ModrecModel,
) -> ModrecStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out pointer is null");
        }
        let Some(path) = path_arg(path) else { return invalid("path is null or not UTF-8") };
        let file = if path.is_dir() { path.join("model.json") } else { path.to_path_buf() };
        match SvmModel::load(&file) {
            Ok(model) => {
                let class_names = model
                    .classes
                    .iter()
                    .map(|c| CString::new(c.name()).unwrap())
                    .collect();
                *out = Box::into_raw(Box::new(ModrecModel { model, class_names }));
                ModrecStatus::ModrecOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a model handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn modrec_model_free(model: *mut ModrecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature dimension the model expects.
#[no_mangle]
pub unsafe extern "C" fn modrec_model_feature_dim(model: *const ModrecModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).model.dim()
}

/// Number of classes the model distinguishes.
#[no_mangle]
pub unsafe extern "C" fn modrec_model_num_classes(model: *const ModrecModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).model.classes.len()
}

/// Name of class `index`; null if out of range. The pointer stays valid
/// for the lifetime of the model handle.
#[no_mangle]
pub unsafe extern "C" fn modrec_model_class_name(
    model: *const ModrecModel,
    index: usize,
) -> *const c_char {
    if model.is_null() {
        return std::ptr::null();
    }
    match (&(*model).class_names).get(index) {
        Some(name) => name.as_ptr(),
        None => std::ptr::null(),
    }
}

/// Feature family the model was trained on.
#[no_mangle]
pub unsafe extern "C" fn modrec_model_family(model: *const ModrecModel) -> ModrecFamily {
    if model.is_null() {
        return ModrecFamily::ModrecFamilyHoc;
    }
    match (*model).model.feature_tag {
        FeatureTag::Hoc => ModrecFamily::ModrecFamilyHoc,
        FeatureTag::Os => ModrecFamily::ModrecFamilyOs,
        FeatureTag::Fv => ModrecFamily::ModrecFamilyLp,
        FeatureTag::FvHoc => ModrecFamily::ModrecFamilyLpHoc,
    }
}

/// Feature dimension produced by `family` (dictionary required for the
/// local families; pass null otherwise). Zero signals an error.
#[no_mangle]
pub unsafe extern "C" fn modrec_feature_dim(
    family: ModrecFamily,
    dict: *const ModrecDict,
) -> usize {
    let local = if dict.is_null() { 0 } else { 4 * (*dict).amplitude.l * (*dict).amplitude.k };
    match family {
        ModrecFamily::ModrecFamilyHoc => 7,
        ModrecFamily::ModrecFamilyOs => 2 * DEFAULT_QUANTILES,
        ModrecFamily::ModrecFamilyLp => local,
        ModrecFamily::ModrecFamilyLpHoc => {
            if local == 0 {
                0
            } else {
                local + 7
            }
        }
    }
}

fn extract(
    inst: &IqInstance,
    family: ModrecFamily,
    dict: *const ModrecDict,
) -> Result<Vec<f64>, ModrecStatus> {
    let local = |inst: &IqInstance| -> Result<Vec<f64>, ModrecStatus> {
        if dict.is_null() {
            return Err(invalid("this feature family needs a dictionary"));
        }
        let d = unsafe { &*dict };
        encode_instance(&d.amplitude, &d.phase, &to_polar(inst))
            .map(|fv| fv.values)
            .map_err(|e| fail(&e))
    };
    match family {
        ModrecFamily::ModrecFamilyHoc => {
            hoc_features(inst).map(|c| c.values.to_vec()).map_err(|e| fail(&e))
        }
        ModrecFamily::ModrecFamilyOs => compute_order_stats(&to_polar(inst), DEFAULT_QUANTILES)
            .map(|o| o.values)
            .map_err(|e| fail(&e)),
        ModrecFamily::ModrecFamilyLp => local(inst),
        ModrecFamily::ModrecFamilyLpHoc => {
            let mut v = local(inst)?;
            v.extend_from_slice(&hoc_features(inst).map_err(|e| fail(&e))?.values);
            Ok(v)
        }
    }
}

/// Extract features from `n_samples` interleaved f32 I/Q pairs. `out` must
/// hold `modrec_feature_dim(family, dict)` doubles.
#[no_mangle]
pub unsafe extern "C" fn modrec_extract(
    iq: *const c_float,
    n_samples: usize,
    family: ModrecFamily,
    dict: *const ModrecDict,
    out: *mut c_double,
    out_len: usize,
) -> ModrecStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out pointer is null");
        }
        let inst = match instance_from_iq(iq, n_samples) {
            Ok(i) => i,
            Err(status) => return status,
        };
        let values = match extract(&inst, family, dict) {
            Ok(v) => v,
            Err(status) => return status,
        };
        if out_len != values.len() {
            return invalid(&format!("out_len {} != feature dim {}", out_len, values.len()));
        }
        std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
        ModrecStatus::ModrecOk
    })
}

/// Classify a pre-extracted feature vector; writes the winning class index
/// (see `modrec_model_class_name`). Optionally writes per-class decision
/// values into `decisions` (length `modrec_model_num_classes`, or null).
#[no_mangle]
pub unsafe extern "C" fn modrec_classify(
    model: *const ModrecModel,
    features: *const c_double,
    len: usize,
    class_index: *mut usize,
    decisions: *mut c_double,
) -> ModrecStatus {
    guarded(|| {
        if model.is_null() || features.is_null() || class_index.is_null() {
            return invalid("model, features, and class_index must be non-null");
        }
        let m = &(*model).model;
        let x = std::slice::from_raw_parts(features, len);
        match predict(m, x) {
            Ok((label, values)) => {
                *class_index = m.classes.iter().position(|&c| c == label).unwrap();
                if !decisions.is_null() {
                    std::ptr::copy_nonoverlapping(values.as_ptr(), decisions, values.len());
                }
                ModrecStatus::ModrecOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Extract and classify raw I/Q in one call. `dict` may be null for models
/// trained on global features.
#[no_mangle]
pub unsafe extern "C" fn modrec_classify_iq(
    model: *const ModrecModel,
    dict: *const ModrecDict,
    iq: *const c_float,
    n_samples: usize,
    class_index: *mut usize,
) -> ModrecStatus {
    guarded(|| {
        if model.is_null() || class_index.is_null() {
            return invalid("model and class_index must be non-null");
        }
        let inst = match instance_from_iq(iq, n_samples) {
            Ok(i) => i,
            Err(status) => return status,
        };
        let family = modrec_model_family(model);
        let values = match extract(&inst, family, dict) {
            Ok(v) => v,
            Err(status) => return status,
        };
        match predict(&(*model).model, &values) {
            Ok((label, _)) => {
                *class_index = (*model).model.classes.iter().position(|&c| c == label).unwrap();
                ModrecStatus::ModrecOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Simulate one instance into `out` as interleaved f32 I/Q pairs
/// (`2 * n_samples` floats). `modulation` is e.g. "QPSK", "16QAM".
#[no_mangle]
pub unsafe extern "C" fn modrec_simulate(
    modulation: *const c_char,
    snr_db: c_double,
    overlap_pct: c_double,
    missing_symbols: usize,
    rotation_rad: c_double,
    n_samples: usize,
    seed: u64,
    out: *mut c_float,
) -> ModrecStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out pointer is null");
        }
        if modulation.is_null() {
            return invalid("modulation is null");
        }
        let name = match CStr::from_ptr(modulation).to_str() {
            Ok(s) => s,
            Err(_) => return invalid("modulation is not UTF-8"),
        };
        let m: Modulation = match name.parse() {
            Ok(m) => m,
            Err(e) => return fail(&e),
        };
        let mut config = SimConfig::new(m, snr_db, n_samples, seed);
        config.overlap_pct = overlap_pct;
        config.missing_symbols = missing_symbols;
        config.rotation_rad = rotation_rad;
        match generate_instance(&config) {
            Ok(inst) => {
                for (k, s) in inst.samples().iter().enumerate() {
                    *out.add(2 * k) = s.i as c_float;
                    *out.add(2 * k + 1) = s.q as c_float;
                }
                ModrecStatus::ModrecOk
            }
            Err(e) => fail(&e),
        }
    })
}
