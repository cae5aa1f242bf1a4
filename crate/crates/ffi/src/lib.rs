//! C ABI for the selection engine.
//!
//! Datasets travel as opaque handles; every fallible call returns a
//! [`DecernStatus`] and leaves a human-readable message retrievable with
//! [`decern_last_error_message`]. Selected indices are written into
//! caller-allocated buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use decern_core::classifier::{self, ClassifierHead, HeadArch, TrainConfig};
use decern_core::config::{self, ConfigMode};
use decern_core::error::Error;
use decern_core::harness::{
    curves_csv, generate_synthetic, report_json, run_experiment, write_atomic, Report,
    SyntheticSpec,
};
use decern_core::pools::{FeatureDataset, PoolState};
use decern_core::seeding;
use decern_core::strategies::{self, StrategyKind, StrategySpec};

/// Result of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecernStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Invalid argument or malformed input value.
    InvalidArgument = 2,
    /// Underlying I/O failure.
    IoError = 3,
    /// A data or checkpoint file does not match its binary format.
    FormatError = 4,
    /// The experiment cannot proceed (budget exceeds the pool).
    Infeasible = 5,
    /// report.json schema or version mismatch.
    SchemaError = 6,
}

/// Opaque dataset handle.
pub struct DecernDataset {
    inner: FeatureDataset,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> DecernStatus {
    match err {
        Error::InvalidInput(_) => DecernStatus::InvalidArgument,
        Error::Io(_) => DecernStatus::IoError,
        Error::Format(_) => DecernStatus::FormatError,
        Error::Schema(_) => DecernStatus::SchemaError,
        Error::Infeasible(_) => DecernStatus::Infeasible,
    }
}

fn fail(err: Error) -> DecernStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Engine version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn decern_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn decern_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Load a dataset file (.dcrn binary or .csv). A `<stem>.test.dcrn`
/// sibling becomes the evaluation split when present.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
/// On `Ok` the caller owns the handle and must release it with
/// [`decern_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn decern_dataset_load(
    path: *const c_char,
    out: *mut *mut DecernDataset,
) -> DecernStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return DecernStatus::NullArgument;
    }
    let Some(path) = cstr_arg(path) else {
        set_error("path is null or not UTF-8");
        return DecernStatus::NullArgument;
    };
    let loaded = if path.ends_with(".csv") {
        FeatureDataset::load_csv(path)
    } else {
        FeatureDataset::load_binary(path)
    };
    match loaded {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(DecernDataset { inner }));
            DecernStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Generate the synthetic benchmark dataset in memory.
///
/// # Safety
/// `out` must be a valid pointer. On `Ok` the caller owns the handle and
/// must release it with [`decern_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn decern_dataset_generate(
    classes: u32,
    per_class: u32,
    dim: u32,
    center_spread: f64,
    noise: f64,
    overlap: f64,
    seed: u64,
    out: *mut *mut DecernDataset,
) -> DecernStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return DecernStatus::NullArgument;
    }
    let spec = SyntheticSpec {
        n_classes: classes as usize,
        per_class: per_class as usize,
        dim: dim as usize,
        center_spread,
        noise,
        overlap,
        seed,
    };
    match generate_synthetic(&spec) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(DecernDataset { inner }));
            DecernStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Release a dataset handle. Null is a no-op.
///
/// # Safety
/// `ds` must be null or a handle produced by this library that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn decern_dataset_free(ds: *mut DecernDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fetch dataset dimensions. Output pointers may be null when the caller
/// does not need a value.
///
/// # Safety
/// `ds` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn decern_dataset_info(
    ds: *const DecernDataset,
    out_samples: *mut u64,
    out_dim: *mut u32,
    out_classes: *mut u32,
) -> DecernStatus {
    if ds.is_null() {
        set_error("dataset handle is null");
        return DecernStatus::NullArgument;
    }
    let inner = &(*ds).inner;
    if !out_samples.is_null() {
        *out_samples = inner.len() as u64;
    }
    if !out_dim.is_null() {
        *out_dim = inner.dim() as u32;
    }
    if !out_classes.is_null() {
        *out_classes = inner.n_classes() as u32;
    }
    DecernStatus::Ok
}

/// One-shot selection: train a fresh linear softmax head on the labeled
/// indices, then pick `budget` unlabeled samples with the named strategy
/// (`decern`, `random`, `kmeans`, `coreset`, `entropy`, `margin`).
///
/// `mask_fraction` and `xi` parameterize the `decern` strategy (pass 0.1
/// and 0.8 for the defaults); `train_epochs` of 0 selects the default
/// epoch count. Selected indices are written ascending into
/// `out_indices`, which must hold at least `budget` entries.
///
/// # Safety
/// `ds` must be a live handle; `strategy` a NUL-terminated string;
/// `labeled` must point to `labeled_len` readable entries; `out_indices`
/// must point to at least `budget` writable entries.
#[no_mangle]
pub unsafe extern "C" fn decern_select(
    ds: *const DecernDataset,
    strategy: *const c_char,
    labeled: *const u64,
    labeled_len: u64,
    budget: u64,
    seed: u64,
    mask_fraction: f64,
    xi: f64,
    train_epochs: u32,
    out_indices: *mut u64,
) -> DecernStatus {
    if ds.is_null() || out_indices.is_null() || (labeled.is_null() && labeled_len > 0) {
        set_error("null pointer argument");
        return DecernStatus::NullArgument;
    }
    let Some(strategy_name) = cstr_arg(strategy) else {
        set_error("strategy is null or not UTF-8");
        return DecernStatus::NullArgument;
    };
    let dataset = &(*ds).inner;
    let labeled: Vec<usize> = std::slice::from_raw_parts(labeled, labeled_len as usize)
        .iter()
        .map(|&i| i as usize)
        .collect();

    let result = (|| -> decern_core::Result<Vec<usize>> {
        let kind = StrategyKind::parse(strategy_name)?;
        let mut spec = StrategySpec::new(kind);
        spec.fusion.mask_fraction = mask_fraction;
        spec.xi = xi;
        spec.validate()?;

        let mut pool = PoolState::new(dataset.len());
        pool.update(&labeled)?;
        if pool.labeled().is_empty() {
            return Err(Error::InvalidInput("labeled set must not be empty".into()));
        }

        let arch = HeadArch::linear(dataset.dim(), dataset.n_classes());
        let mut head = ClassifierHead::init_seeded(arch, seeding::mix(seed, seeding::SALT_HEAD_INIT));
        let tcfg = TrainConfig {
            epochs: if train_epochs == 0 { 100 } else { train_epochs as usize },
            seed: seeding::mix(seed, seeding::SALT_TRAIN),
            ..TrainConfig::default()
        };
        classifier::train(
            &mut head,
            dataset.embeddings(),
            dataset.labels(),
            pool.labeled(),
            &tcfg,
        )?;

        let res = strategies::select(
            &spec,
            &head,
            dataset,
            &pool,
            budget as usize,
            seeding::mix(seed, seeding::SALT_SELECT),
            None,
        )?;
        Ok(res.indices)
    })();

    match result {
        Ok(indices) => {
            let out = std::slice::from_raw_parts_mut(out_indices, budget as usize);
            for (slot, &idx) in out.iter_mut().zip(indices.iter()) {
                *slot = idx as u64;
            }
            DecernStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Run a full experiment from a config file, writing report.json and
/// curves.csv exactly like `decern run`. `output_dir` overrides the
/// config's `output.dir` when non-null.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `output_dir` must be
/// null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn decern_run_experiment(
    config_path: *const c_char,
    output_dir: *const c_char,
) -> DecernStatus {
    let Some(path) = cstr_arg(config_path) else {
        set_error("config path is null or not UTF-8");
        return DecernStatus::NullArgument;
    };
    let out_override = if output_dir.is_null() {
        None
    } else {
        match cstr_arg(output_dir) {
            Some(s) => Some(s.to_string()),
            None => {
                set_error("output_dir is not UTF-8");
                return DecernStatus::NullArgument;
            }
        }
    };

    let result = (|| -> decern_core::Result<()> {
        let text = std::fs::read_to_string(path)?;
        let mut map = config::parse_config_text(&text)?;
        if let Some(dir) = &out_override {
            map.insert("output.dir".into(), dir.clone());
        }
        let (mut cfg, echo) = config::resolve(&map, ConfigMode::Run)?;
        cfg.record_timing = false;
        let runs = run_experiment(&cfg)?;
        let report = Report::new(echo, runs).without_timings();
        let out_dir = PathBuf::from(&cfg.output_dir);
        write_atomic(&out_dir.join("report.json"), &report_json(&report)?)?;
        write_atomic(&out_dir.join("curves.csv"), &curves_csv(&report))?;
        Ok(())
    })();

    match result {
        Ok(()) => DecernStatus::Ok,
        Err(err) => fail(err),
    }
}
