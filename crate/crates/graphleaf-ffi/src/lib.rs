//! C ABI for the graphleaf pipeline.
//!
//! Conventions:
//! * Functions return an `int32_t` status: 0 ok, 1 usage error, 2
//!   data/format error, 3 numeric failure (matching the CLI exit codes).
//! * On failure, `graphleaf_last_error()` returns a thread-local message
//!   valid until the next failing call on the same thread.
//! * `GraphleafModel` is an opaque handle; free it with
//!   `graphleaf_model_free`. Strings returned as `char*` are owned by the
//!   caller and must be released with `graphleaf_string_free`.
//!
//! The header is generated into `include/graphleaf.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use graphleaf::error::Error;
use graphleaf::model::{ModelConfig, Variant};
use graphleaf::pipeline::{self, ModelBundle, PreprocessOptions};
use graphleaf::train::{evaluate_model, RunConfig};

pub const STATUS_OK: i32 = 0;
pub const STATUS_USAGE: i32 = 1;
pub const STATUS_DATA: i32 = 2;
pub const STATUS_NUMERIC: i32 = 3;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(err: Error) -> i32 {
    let code = err.exit_code();
    set_last_error(&err.to_string());
    code
}

fn fail_usage(message: &str) -> i32 {
    set_last_error(message);
    STATUS_USAGE
}

/// Runs `body`, converting panics and errors into status codes.
fn guarded(body: impl FnOnce() -> Result<(), Error>) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => STATUS_OK,
        Ok(Err(e)) => fail(e),
        Err(_) => {
            set_last_error("internal panic");
            STATUS_NUMERIC
        }
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string.
unsafe fn path_arg(ptr: *const c_char, what: &str) -> Result<PathBuf, String> {
    if ptr.is_null() {
        return Err(format!("{} must not be null", what));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(format!("{} is not valid UTF-8", what)),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn graphleaf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread. Never null; empty when no
/// failure happened. Valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn graphleaf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by a graphleaf function
/// that documents this contract, or null.
#[no_mangle]
pub unsafe extern "C" fn graphleaf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Scan `data_dir` (one subdirectory per class), segment every image and
/// write `<out_prefix>.train.ragc` / `<out_prefix>.test.ragc` plus the
/// split manifests. `segments` of 0 means the default (50); `split` is
/// the train fraction in (0, 1).
///
/// # Safety
/// `data_dir` and `out_prefix` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn graphleaf_preprocess(
    data_dir: *const c_char,
    out_prefix: *const c_char,
    segments: u32,
    split: f64,
    seed: u64,
) -> i32 {
    let data = match path_arg(data_dir, "data_dir") {
        Ok(p) => p,
        Err(m) => return fail_usage(&m),
    };
    let prefix = match path_arg(out_prefix, "out_prefix") {
        Ok(p) => p,
        Err(m) => return fail_usage(&m),
    };
    guarded(|| {
        let opts = PreprocessOptions {
            segments: if segments == 0 { 50 } else { segments as usize },
            split,
            seed,
        };
        let mut skips = Vec::new();
        pipeline::preprocess_corpus(&data, &prefix, &opts, &mut skips)?;
        Ok(())
    })
}

/// Train a model from a cache pair and write the run artifacts
/// (config.json, final.ckpt, best.ckpt, curves.csv, report.json,
/// confusion.csv) into `out_dir`. Zero-valued numeric arguments select
/// the defaults: epochs 100, batch 32, hidden 512, lr 0.001. `variant`
/// is "gcn", "gat" or "hybrid".
///
/// # Safety
/// `cache_prefix`, `variant` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn graphleaf_train(
    cache_prefix: *const c_char,
    variant: *const c_char,
    epochs: u32,
    batch: u32,
    lr: f64,
    edge_aug_p: f64,
    hidden: u32,
    seed: u64,
    out_dir: *const c_char,
) -> i32 {
    let cache = match path_arg(cache_prefix, "cache_prefix") {
        Ok(p) => p,
        Err(m) => return fail_usage(&m),
    };
    let out = match path_arg(out_dir, "out_dir") {
        Ok(p) => p,
        Err(m) => return fail_usage(&m),
    };
    let variant: Variant = {
        if variant.is_null() {
            return fail_usage("variant must not be null");
        }
        match CStr::from_ptr(variant).to_str() {
            Ok(s) => match s.parse() {
                Ok(v) => v,
                Err(e) => return fail(e),
            },
            Err(_) => return fail_usage("variant is not valid UTF-8"),
        }
    };
    guarded(|| {
        let mut model = ModelConfig::new(variant, 2);
        if hidden > 0 {
            model.hidden_dim = hidden as usize;
        }
        model.edge_aug_p = edge_aug_p;
        let run = RunConfig {
            model,
            epochs: if epochs == 0 { 100 } else { epochs as usize },
            batch_size: if batch == 0 { 32 } else { batch as usize },
            lr: if lr == 0.0 { 0.001 } else { lr },
            seed,
            cache: Some(cache.clone()),
            out: Some(out.clone()),
        };
        pipeline::run_training(&run)?;
        Ok(())
    })
}

/// Opaque handle to a loaded checkpoint plus its run configuration.
pub struct GraphleafModel {
    bundle: ModelBundle,
}

/// Load a checkpoint. `config_path` may be null, in which case the
/// sibling `config.json` of the checkpoint is used. Returns null on
/// failure (see `graphleaf_last_error`).
///
/// # Safety
/// `checkpoint_path` must be a NUL-terminated string; `config_path` must
/// be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn graphleaf_model_load(
    checkpoint_path: *const c_char,
    config_path: *const c_char,
) -> *mut GraphleafModel {
    let checkpoint = match path_arg(checkpoint_path, "checkpoint_path") {
        Ok(p) => p,
        Err(m) => {
            set_last_error(&m);
            return std::ptr::null_mut();
        }
    };
    let config: Option<PathBuf> = if config_path.is_null() {
        None
    } else {
        match path_arg(config_path, "config_path") {
            Ok(p) => Some(p),
            Err(m) => {
                set_last_error(&m);
                return std::ptr::null_mut();
            }
        }
    };
    let loaded = catch_unwind(AssertUnwindSafe(|| {
        ModelBundle::load(&checkpoint, config.as_deref())
    }));
    match loaded {
        Ok(Ok(bundle)) => Box::into_raw(Box::new(GraphleafModel { bundle })),
        Ok(Err(e)) => {
            set_last_error(&e.to_string());
            std::ptr::null_mut()
        }
        Err(_) => {
            set_last_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `model` must be a pointer from `graphleaf_model_load`, or null.
#[no_mangle]
pub unsafe extern "C" fn graphleaf_model_free(model: *mut GraphleafModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of classes the model predicts; 0 when `model` is null.
///
/// # Safety
/// `model` must be a pointer from `graphleaf_model_load`, or null.
#[no_mangle]
pub unsafe extern "C" fn graphleaf_model_num_classes(model: *const GraphleafModel) -> u32 {
    if model.is_null() {
        return 0;
    }
    (*model).bundle.class_names.len() as u32
}

/// Class name at `index` as a caller-owned string (release with
/// `graphleaf_string_free`), or null when out of range.
///
/// # Safety
/// `model` must be a pointer from `graphleaf_model_load`, or null.
#[no_mangle]
pub unsafe extern "C" fn graphleaf_model_class_name(
    model: *const GraphleafModel,
    index: u32,
) -> *mut c_char {
    if model.is_null() {
        return std::ptr::null_mut();
    }
    let names = &(*model).bundle.class_names;
    match names.get(index as usize) {
        Some(name) => CString::new(name.as_str())
            .map(|s| s.into_raw())
            .unwrap_or(std::ptr::null_mut()),
        None => std::ptr::null_mut(),
    }
}

/// Classify one image. Writes the class probabilities into
/// `probabilities_out` (capacity `probabilities_len`, which must be at
/// least the class count) and the winning class index into
/// `class_index_out`. Either output pointer may be null to skip it.
///
/// # Safety
/// `model` must come from `graphleaf_model_load`; `image_path` must be a
/// NUL-terminated string; `probabilities_out` must point to at least
/// `probabilities_len` floats when non-null.
#[no_mangle]
pub unsafe extern "C" fn graphleaf_model_predict(
    model: *const GraphleafModel,
    image_path: *const c_char,
    probabilities_out: *mut f32,
    probabilities_len: usize,
    class_index_out: *mut u32,
) -> i32 {
    if model.is_null() {
        return fail_usage("model must not be null");
    }
    let image = match path_arg(image_path, "image_path") {
        Ok(p) => p,
        Err(m) => return fail_usage(&m),
    };
    let bundle = &(*model).bundle;
    let classes = bundle.class_names.len();
    if !probabilities_out.is_null() && probabilities_len < classes {
        return fail_usage("probabilities buffer is smaller than the class count");
    }
    let prediction = match catch_unwind(AssertUnwindSafe(|| {
        pipeline::predict_image(bundle, Path::new(&image))
    })) {
        Ok(Ok(p)) => p,
        Ok(Err(e)) => return fail(e),
        Err(_) => {
            set_last_error("internal panic");
            return STATUS_NUMERIC;
        }
    };
    if !probabilities_out.is_null() {
        std::ptr::copy_nonoverlapping(
            prediction.probabilities.as_ptr(),
            probabilities_out,
            classes,
        );
    }
    if !class_index_out.is_null() {
        *class_index_out = prediction.class_index as u32;
    }
    STATUS_OK
}

/// Evaluate the model against a `.ragc` cache. On success, stores a
/// caller-owned JSON report string in `report_json_out` (release with
/// `graphleaf_string_free`).
///
/// # Safety
/// `model` must come from `graphleaf_model_load`; `cache_path` must be a
/// NUL-terminated string; `report_json_out` must be a valid pointer when
/// non-null.
#[no_mangle]
pub unsafe extern "C" fn graphleaf_model_evaluate(
    model: *const GraphleafModel,
    cache_path: *const c_char,
    report_json_out: *mut *mut c_char,
) -> i32 {
    if model.is_null() {
        return fail_usage("model must not be null");
    }
    let cache = match path_arg(cache_path, "cache_path") {
        Ok(p) => p,
        Err(m) => return fail_usage(&m),
    };
    let bundle = &(*model).bundle;
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<String, Error> {
        let test = graphleaf::rag::read_cache(&cache)?;
        if test.class_names != bundle.class_names {
            return Err(Error::Input(format!(
                "checkpoint classes {:?} do not match cache classes {:?}",
                bundle.class_names, test.class_names
            )));
        }
        let report = evaluate_model(&bundle.params, &bundle.model, &test)?;
        let run = RunConfig {
            model: bundle.model.clone(),
            epochs: 0,
            batch_size: 32,
            lr: 0.0,
            seed: 0,
            cache: Some(cache.clone()),
            out: None,
        };
        let doc = pipeline::report_json(&report, &run, &bundle.class_names, 0.0, None);
        Ok(serde_json::to_string_pretty(&doc).expect("report serializes"))
    }));
    match result {
        Ok(Ok(json)) => {
            if !report_json_out.is_null() {
                let c = CString::new(json.replace('\0', " ")).unwrap_or_default();
                *report_json_out = c.into_raw();
            }
            STATUS_OK
        }
        Ok(Err(e)) => fail(e),
        Err(_) => {
            set_last_error("internal panic");
            STATUS_NUMERIC
        }
    }
}
