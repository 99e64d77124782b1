//! C ABI over the rpf lab.
//!
//! Every fallible function returns an [`RpfStatus`]. On failure a message is
//! kept per thread and can be read with [`rpf_last_error_message`]. Handles
//! are opaque heap objects released with their matching `_free` function.
//! Panics never cross the boundary; they surface as `RPF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rpf::analysis::spearman_rho;
use rpf::checkpoint::{encode, load_checkpoint, load_meta, save_checkpoint, sidecar_path, Checkpoint, CheckpointMeta, FORMAT_VERSION};
use rpf::config::KvConfig;
use rpf::data::{generate_benchmark, load_benchmark, save_benchmark, BenchmarkBundle, BenchmarkConfig};
use rpf::eval::{h_score, predict_with_threshold, probabilities};
use rpf::linalg::Matrix;
use rpf::train::{run_experiment, TrainConfig};
use rpf::Error;

/// Result code of every fallible call. Values 2 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpfStatus {
    Ok = 0,
    /// A required pointer was null or a string was not valid UTF-8.
    InvalidArgument = 1,
    /// Bad configuration, shapes, labels or missing files.
    Input = 2,
    /// Divergence or another non-finite result.
    Numerical = 3,
    /// Unrecognized checkpoint or manifest format, or unsupported version.
    Format = 4,
    /// An internal panic was caught.
    Panic = 5,
}

/// A generated or loaded synthetic benchmark.
pub struct RpfBenchmark {
    bundle: BenchmarkBundle,
}

/// A trained model: backbone, head and their frozen references.
pub struct RpfModel {
    ckpt: Checkpoint,
    meta: Option<CheckpointMeta>,
}

/// Headline numbers of one training run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RpfRunSummary {
    pub selected_epoch: usize,
    pub selected_val_acc: f64,
    pub acc_known: f64,
    pub best_h_score: f64,
    pub best_threshold: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RpfStatus {
    match err.exit_code() {
        3 => RpfStatus::Numerical,
        4 => RpfStatus::Format,
        _ => RpfStatus::Input,
    }
}

struct Fail(RpfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(RpfStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RpfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RpfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            RpfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(&format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(&format!("`{name}` is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| invalid(&format!("`{name}` is null")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(&format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn parse_config(text: &str) -> Result<KvConfig, Fail> {
    Ok(KvConfig::parse_str(text, &PathBuf::from("<ffi>"))?)
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rpf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rpf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a benchmark. `config` holds `key=value` lines and may be null
/// for the defaults.
///
/// # Safety
/// `config` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rpf_benchmark_generate(
    config: *const c_char,
    seed: u64,
    out: *mut *mut RpfBenchmark,
) -> RpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kv = if config.is_null() {
            KvConfig::default()
        } else {
            parse_config(str_arg(config, "config")?)?
        };
        let bundle = generate_benchmark(&BenchmarkConfig::from_kv(&kv)?, seed)?;
        *out = Box::into_raw(Box::new(RpfBenchmark { bundle }));
        Ok(())
    })
}

/// Loads a benchmark directory written by `rpf generate` or
/// [`rpf_benchmark_save`].
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rpf_benchmark_load(dir: *const c_char, out: *mut *mut RpfBenchmark) -> RpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let bundle = load_benchmark(str_arg(dir, "dir")?.as_ref())?;
        *out = Box::into_raw(Box::new(RpfBenchmark { bundle }));
        Ok(())
    })
}

/// # Safety
/// `bench` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rpf_benchmark_save(bench: *const RpfBenchmark, dir: *const c_char) -> RpfStatus {
    guard(|| {
        let bench = ref_arg(bench, "bench")?;
        save_benchmark(&bench.bundle, str_arg(dir, "dir")?.as_ref())?;
        Ok(())
    })
}

/// # Safety
/// `bench` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rpf_benchmark_shape(
    bench: *const RpfBenchmark,
    input_dim: *mut usize,
    num_known: *mut usize,
    num_target: *mut usize,
) -> RpfStatus {
    guard(|| {
        let bench = ref_arg(bench, "bench")?;
        *out_arg(input_dim, "input_dim")? = bench.bundle.input_dim();
        *out_arg(num_known, "num_known")? = bench.bundle.num_known();
        *out_arg(num_target, "num_target")? = bench.bundle.target.len();
        Ok(())
    })
}

/// Copies the target domain into caller buffers: `x` holds
/// `num_target × input_dim` row-major values and `y` the labels.
///
/// # Safety
/// `x` and `y` must be writable for the sizes reported by
/// [`rpf_benchmark_shape`].
#[no_mangle]
pub unsafe extern "C" fn rpf_benchmark_target(bench: *const RpfBenchmark, x: *mut f64, y: *mut usize) -> RpfStatus {
    guard(|| {
        let target = &ref_arg(bench, "bench")?.bundle.target;
        if x.is_null() || y.is_null() {
            return Err(invalid("output buffer is null"));
        }
        let xs = target.x.as_slice();
        std::slice::from_raw_parts_mut(x, xs.len()).copy_from_slice(xs);
        std::slice::from_raw_parts_mut(y, target.y.len()).copy_from_slice(&target.y);
        Ok(())
    })
}

/// # Safety
/// `bench` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rpf_benchmark_free(bench: *mut RpfBenchmark) {
    if !bench.is_null() {
        drop(Box::from_raw(bench));
    }
}

/// Runs pre-training, linear probing and fine-tuning on `bench`. `config`
/// holds training `key=value` lines (null for defaults). The trained model
/// is returned through `out_model` and its headline numbers through
/// `summary`, which may be null.
///
/// # Safety
/// `bench` must be a live handle, `config` null or NUL-terminated,
/// `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn rpf_run_experiment(
    bench: *const RpfBenchmark,
    config: *const c_char,
    out_model: *mut *mut RpfModel,
    summary: *mut RpfRunSummary,
) -> RpfStatus {
    guard(|| {
        let bench = ref_arg(bench, "bench")?;
        let out_model = out_arg(out_model, "out_model")?;
        let kv = if config.is_null() {
            KvConfig::default()
        } else {
            parse_config(str_arg(config, "config")?)?
        };
        let cfg = TrainConfig::from_kv(&kv)?;
        let exp = run_experiment(&bench.bundle, &cfg)?;
        if let Some(s) = summary.as_mut() {
            *s = RpfRunSummary {
                selected_epoch: exp.record.selected_epoch,
                selected_val_acc: exp.record.selected_val_acc,
                acc_known: exp.eval.acc_known,
                best_h_score: exp.eval.best_h_score,
                best_threshold: exp.eval.best_threshold,
            };
        }
        let meta = CheckpointMeta {
            format_version: FORMAT_VERSION,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            variant: cfg.variant.name().to_string(),
            selected_epoch: exp.record.selected_epoch,
        };
        *out_model = Box::into_raw(Box::new(RpfModel {
            ckpt: Checkpoint {
                state: exp.record.state,
                bank: Some(exp.bank),
            },
            meta: Some(meta),
        }));
        Ok(())
    })
}

/// Loads a checkpoint, plus its JSON sidecar when present.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rpf_model_load(path: *const c_char, out: *mut *mut RpfModel) -> RpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let ckpt = load_checkpoint(&path)?;
        let meta = if sidecar_path(&path).exists() {
            Some(load_meta(&path)?)
        } else {
            None
        };
        *out = Box::into_raw(Box::new(RpfModel { ckpt, meta }));
        Ok(())
    })
}

/// Writes the checkpoint (and its sidecar when metadata is known).
///
/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rpf_model_save(model: *const RpfModel, path: *const c_char) -> RpfStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        match &model.meta {
            Some(meta) => save_checkpoint(&path, &model.ckpt, meta)?,
            None => std::fs::write(&path, encode(&model.ckpt)?).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?,
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn rpf_model_shape(
    model: *const RpfModel,
    input_dim: *mut usize,
    num_classes: *mut usize,
) -> RpfStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        *out_arg(input_dim, "input_dim")? = model.ckpt.state.f.input_dim();
        *out_arg(num_classes, "num_classes")? = model.ckpt.state.num_classes();
        Ok(())
    })
}

fn input_matrix(model: &RpfModel, x: &[f64], rows: usize, cols: usize) -> Result<Matrix, Fail> {
    let expected = model.ckpt.state.f.input_dim();
    if cols != expected {
        return Err(Fail(
            RpfStatus::Input,
            format!("input has {cols} columns, model expects {expected}"),
        ));
    }
    Ok(Matrix::from_vec(rows, cols, x.to_vec())?)
}

/// Softmax class probabilities for `rows × cols` row-major inputs, written
/// as `rows × num_classes` values into `out`.
///
/// # Safety
/// `x` must hold `rows × cols` values, `out` room for `rows × num_classes`.
#[no_mangle]
pub unsafe extern "C" fn rpf_model_predict_proba(
    model: *const RpfModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> RpfStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let x = input_matrix(model, slice_arg(x, rows * cols, "x")?, rows, cols)?;
        let p = probabilities(&model.ckpt.state.f, &model.ckpt.state.h, &x)?;
        if p.as_slice().is_empty() {
            return Ok(());
        }
        if out.is_null() {
            return Err(invalid("`out` is null"));
        }
        std::slice::from_raw_parts_mut(out, p.as_slice().len()).copy_from_slice(p.as_slice());
        Ok(())
    })
}

/// Open-set labels at `threshold`: the argmax class, or `num_classes` when
/// the top probability is below the threshold.
///
/// # Safety
/// `x` must hold `rows × cols` values, `labels` room for `rows`.
#[no_mangle]
pub unsafe extern "C" fn rpf_model_predict(
    model: *const RpfModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    threshold: f64,
    labels: *mut usize,
) -> RpfStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let x = input_matrix(model, slice_arg(x, rows * cols, "x")?, rows, cols)?;
        let preds = predict_with_threshold(&model.ckpt.state, &x, threshold)?;
        if preds.is_empty() {
            return Ok(());
        }
        if labels.is_null() {
            return Err(invalid("`labels` is null"));
        }
        let out = std::slice::from_raw_parts_mut(labels, preds.len());
        for (o, p) in out.iter_mut().zip(&preds) {
            *o = p.label;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rpf_model_free(model: *mut RpfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Harmonic mean of known-class and unknown-class accuracy (0 when both are 0).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rpf_h_score(acc_known: f64, acc_open: f64, out: *mut f64) -> RpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if !(0.0..=1.0).contains(&acc_known) || !(0.0..=1.0).contains(&acc_open) {
            return Err(Fail(RpfStatus::Input, "accuracies must lie in [0, 1]".into()));
        }
        *out = h_score(acc_known, acc_open);
        Ok(())
    })
}

/// Spearman rank correlation of two length-`n` series.
///
/// # Safety
/// `a` and `b` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rpf_spearman_rho(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> RpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = spearman_rho(slice_arg(a, n, "a")?, slice_arg(b, n, "b")?)?;
        Ok(())
    })
}
