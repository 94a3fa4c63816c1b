//! C ABI over the `archsearch` engine.
//!
//! Conventions:
//!
//! * Every function returns an [`AsStatus`]; results go through out-pointers,
//!   which are written only on `AS_OK`.
//! * Handles (`AsSpace`, `AsTable`, `AsModel`) are opaque, created by a
//!   `*_new`/`*_load` function and released by the matching `*_free`, which
//!   accepts NULL.
//! * A genotype is 29 `uint8_t` genes; `n` genotypes are `29·n` contiguous bytes.
//! * On failure [`as_last_error`] describes the error. The string belongs to
//!   the library and stays valid until the next failing call on the same thread.
//! * Panics never cross the boundary; they surface as `AS_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use archsearch::config;
use archsearch::evaluator::synthetic_accuracy;
use archsearch::metrics::{hypervolume_2d, kendall_tau, miou, ConfusionMatrix};
use archsearch::prescreen::{ks_statistic, subset_select_ks, KsGaConfig};
use archsearch::search::{run_search, Checkpointer};
use archsearch::seed;
use archsearch::surrogate::{train_ranknet, TrainConfig};
use archsearch::{Genotype, LatencyTable, RankNetModel, SearchSpace, GENOTYPE_LEN};

/// Genes per genotype.
pub const AS_GENOTYPE_LEN: usize = 29;
const _: () = assert!(AS_GENOTYPE_LEN == GENOTYPE_LEN);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsStatus {
    AsOk = 0,
    AsErrNullPointer = 1,
    AsErrInvalidArgument = 2,
    AsErrParse = 3,
    AsErrIo = 4,
    AsErrRuntime = 5,
    AsErrPanic = 6,
}

pub struct AsSpace(SearchSpace);
pub struct AsTable(LatencyTable);
pub struct AsModel(RankNetModel);

struct Failure(AsStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(AsStatus::AsErrInvalidArgument, msg.into())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> AsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AsStatus::AsOk,
        Ok(Err(Failure(code, msg))) => {
            set_last_error(&msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            AsStatus::AsErrPanic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(AsStatus::AsErrNullPointer, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid(format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn genotypes_arg(genes: *const u8, count: usize, space: &SearchSpace) -> Result<Vec<Genotype>, Failure> {
    let bytes = slice_arg(genes, count * GENOTYPE_LEN, "genes")?;
    bytes
        .chunks_exact(GENOTYPE_LEN)
        .enumerate()
        .map(|(i, c)| {
            let g = Genotype(c.try_into().expect("exact chunk"));
            g.validate(space).map_err(|e| Failure::invalid(format!("genotype {i}: {e}")))?;
            Ok(g)
        })
        .collect()
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    non_null(p, name)?;
    Ok(&*p)
}

fn boxed<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` before building `value`
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the last failure on this thread; empty if none.
#[no_mangle]
pub extern "C" fn as_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn as_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a space from a preset name (`default`, `compact`) or a space file.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn as_space_new(name: *const c_char, out: *mut *mut AsSpace) -> AsStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        non_null(out, "out")?;
        let space = config::resolve_space(name).map_err(|e| Failure::invalid(e.to_string()))?;
        boxed(out, AsSpace(space));
        Ok(())
    })
}

/// # Safety
/// `space` must be NULL or a handle from [`as_space_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn as_space_free(space: *mut AsSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Length of the one-hot feature vector of this space.
///
/// # Safety
/// `space` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn as_space_one_hot_dim(space: *const AsSpace, out: *mut usize) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        non_null(out, "out")?;
        *out = space.0.one_hot_dim();
        Ok(())
    })
}

/// Number of canonical genotypes, saturated at `UINT64_MAX`.
///
/// # Safety
/// `space` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn as_space_cardinality(space: *const AsSpace, out: *mut u64) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        non_null(out, "out")?;
        *out = u64::try_from(space.0.cardinality().0).unwrap_or(u64::MAX);
        Ok(())
    })
}

/// Checks one genotype; `AS_ERR_INVALID_ARGUMENT` when it is not canonical.
///
/// # Safety
/// `genes` must point to 29 bytes.
#[no_mangle]
pub unsafe extern "C" fn as_genotype_validate(space: *const AsSpace, genes: *const u8) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        genotypes_arg(genes, 1, &space.0).map(|_| ())
    })
}

/// Writes the canonical form of `genes` (padding slots zeroed) to `out`.
///
/// # Safety
/// `genes` and `out` must each point to 29 bytes; they may alias.
#[no_mangle]
pub unsafe extern "C" fn as_genotype_canonicalize(space: *const AsSpace, genes: *const u8, out: *mut u8) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        let g = Genotype(slice_arg(genes, GENOTYPE_LEN, "genes")?.try_into().expect("length 29"));
        let c = g.canonicalize(&space.0).map_err(|e| Failure::invalid(e.to_string()))?;
        non_null(out, "out")?;
        ptr::copy(c.0.as_ptr(), out, GENOTYPE_LEN);
        Ok(())
    })
}

/// Writes `count` random canonical genotypes, reproducible from `seed`.
///
/// # Safety
/// `out` must point to `29·count` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn as_genotype_random(space: *const AsSpace, seed: u64, count: usize, out: *mut u8) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        let dst = slice_out(out, count * GENOTYPE_LEN, "out")?;
        let mut rng = seed::rng(seed, "ffi-random", 0);
        for chunk in dst.chunks_exact_mut(GENOTYPE_LEN) {
            chunk.copy_from_slice(&Genotype::random(&space.0, &mut rng).0);
        }
        Ok(())
    })
}

/// Writes the one-hot features of one genotype; `out` holds `one_hot_dim` doubles.
///
/// # Safety
/// `genes` must point to 29 bytes and `out` to `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn as_genotype_one_hot(
    space: *const AsSpace,
    genes: *const u8,
    out: *mut f64,
    capacity: usize,
) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        let g = genotypes_arg(genes, 1, &space.0)?[0];
        let v = g.one_hot(&space.0);
        if capacity < v.len() {
            return Err(Failure::invalid(format!("capacity {capacity} below one-hot dimension {}", v.len())));
        }
        slice_out(out, v.len(), "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Closed-form accuracy of the synthetic benchmark, in [0, 1].
///
/// # Safety
/// `genes` must point to 29 bytes and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn as_synthetic_accuracy(space: *const AsSpace, genes: *const u8, out: *mut f64) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        let g = genotypes_arg(genes, 1, &space.0)?[0];
        non_null(out, "out")?;
        *out = synthetic_accuracy(&space.0, &g).map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// The deterministic synthetic table of a space.
///
/// # Safety
/// `space` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn as_table_synthetic(space: *const AsSpace, out: *mut *mut AsTable) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        non_null(out, "out")?;
        boxed(out, AsTable(LatencyTable::synthetic(&space.0)));
        Ok(())
    })
}

/// Loads a table file and checks it covers every key of the space.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn as_table_load(space: *const AsSpace, path: *const c_char, out: *mut *mut AsTable) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        let path = str_arg(path, "path")?;
        non_null(out, "out")?;
        let loaded = LatencyTable::load(Path::new(path), &space.0).map_err(|e| match e {
            archsearch::latency::TableError::Io { .. } => Failure(AsStatus::AsErrIo, e.to_string()),
            _ => Failure(AsStatus::AsErrParse, e.to_string()),
        })?;
        loaded.table.check_complete(&space.0).map_err(|e| Failure(AsStatus::AsErrParse, format!("{path}: {e}")))?;
        boxed(out, AsTable(loaded.table));
        Ok(())
    })
}

/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn as_table_free(table: *mut AsTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Predicted latency in milliseconds of `count` genotypes.
///
/// # Safety
/// `genes` must point to `29·count` bytes and `out` to `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn as_table_predict(
    table: *const AsTable,
    space: *const AsSpace,
    genes: *const u8,
    count: usize,
    out: *mut f64,
) -> AsStatus {
    guard(|| {
        let table = handle(table, "table")?;
        let space = handle(space, "space")?;
        let gs = genotypes_arg(genes, count, &space.0)?;
        let dst = slice_out(out, count, "out")?;
        for (d, g) in dst.iter_mut().zip(&gs) {
            *d = table.0.predict(&space.0, g).map_err(|e| Failure(AsStatus::AsErrRuntime, e.to_string()))?;
        }
        Ok(())
    })
}

/// Trains a predictor on `count` (genotype, accuracy) samples. `config_toml`
/// may be NULL for defaults or hold training keys such as `epochs = 50`.
///
/// # Safety
/// `genes` must point to `29·count` bytes, `accuracy` to `count` doubles,
/// `config_toml` be NULL or NUL-terminated, and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn as_model_train(
    space: *const AsSpace,
    genes: *const u8,
    accuracy: *const f64,
    count: usize,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut AsModel,
) -> AsStatus {
    guard(|| {
        let space = handle(space, "space")?;
        let gs = genotypes_arg(genes, count, &space.0)?;
        let ys = slice_arg(accuracy, count, "accuracy")?;
        let cfg: TrainConfig = if config_toml.is_null() {
            TrainConfig::default()
        } else {
            toml::from_str(str_arg(config_toml, "config_toml")?).map_err(|e| Failure(AsStatus::AsErrParse, e.to_string()))?
        };
        non_null(out, "out")?;
        let samples: Vec<(Genotype, f64)> = gs.into_iter().zip(ys.iter().copied()).collect();
        let (model, _) =
            train_ranknet(&samples, &space.0, &cfg, seed).map_err(|e| Failure(AsStatus::AsErrRuntime, e.to_string()))?;
        boxed(out, AsModel(model));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn as_model_load(path: *const c_char, out: *mut *mut AsModel) -> AsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        non_null(out, "out")?;
        let m = RankNetModel::load(Path::new(path)).map_err(|e| match e {
            archsearch::surrogate::SurrogateError::Io(_) => Failure(AsStatus::AsErrIo, e.to_string()),
            _ => Failure(AsStatus::AsErrParse, e.to_string()),
        })?;
        boxed(out, AsModel(m));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn as_model_save(model: *const AsModel, path: *const c_char) -> AsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let path = str_arg(path, "path")?;
        model.0.save(Path::new(path)).map_err(|e| Failure(AsStatus::AsErrIo, e.to_string()))
    })
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn as_model_free(model: *mut AsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicted accuracy scores in (0, 1) for `count` genotypes.
///
/// # Safety
/// `genes` must point to `29·count` bytes and `out` to `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn as_model_predict(
    model: *const AsModel,
    space: *const AsSpace,
    genes: *const u8,
    count: usize,
    out: *mut f64,
) -> AsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let space = handle(space, "space")?;
        let gs = genotypes_arg(genes, count, &space.0)?;
        let preds = model.0.predict(&space.0, &gs).map_err(|e| Failure::invalid(e.to_string()))?;
        slice_out(out, count, "out")?.copy_from_slice(&preds);
        Ok(())
    })
}

/// Hypervolume of `count` maximization points (`x0, y0, x1, y1, ...`)
/// against a reference every point must strictly dominate.
///
/// # Safety
/// `points` must point to `2·count` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn as_hypervolume_2d(
    points: *const f64,
    count: usize,
    ref_x: f64,
    ref_y: f64,
    out: *mut f64,
) -> AsStatus {
    guard(|| {
        let flat = slice_arg(points, 2 * count, "points")?;
        non_null(out, "out")?;
        let pts: Vec<[f64; 2]> = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        *out = hypervolume_2d(&pts, [ref_x, ref_y]).map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// Kendall τ-b of two sequences.
///
/// # Safety
/// `a` and `b` must each point to `count` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn as_kendall_tau(a: *const f64, b: *const f64, count: usize, out: *mut f64) -> AsStatus {
    guard(|| {
        let (a, b) = (slice_arg(a, count, "a")?, slice_arg(b, count, "b")?);
        non_null(out, "out")?;
        *out = kendall_tau(a, b).map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// Mean IoU of a row-major `classes × classes` confusion matrix (rows are truth).
///
/// # Safety
/// `matrix` must point to `classes²` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn as_miou(matrix: *const u64, classes: usize, out: *mut f64) -> AsStatus {
    guard(|| {
        let flat = slice_arg(matrix, classes * classes, "matrix")?;
        non_null(out, "out")?;
        let rows: Vec<Vec<u64>> = flat.chunks_exact(classes.max(1)).map(<[u64]>::to_vec).collect();
        let cm = ConfusionMatrix::new(&rows).map_err(|e| Failure::invalid(e.to_string()))?;
        *out = miou(&cm).map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// KS distance between the samples and U(lo, hi).
///
/// # Safety
/// `samples` must point to `count` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn as_ks_statistic(samples: *const f64, count: usize, lo: f64, hi: f64, out: *mut f64) -> AsStatus {
    guard(|| {
        let s = slice_arg(samples, count, "samples")?;
        non_null(out, "out")?;
        *out = ks_statistic(s, lo, hi).map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// Picks at most `k` of `count` latencies to be as uniform on [lo, hi] as
/// possible. `mask_out[i]` is set to 1 for selected entries, 0 otherwise.
///
/// # Safety
/// `latencies` must point to `count` doubles and `mask_out` to `count` bytes.
#[no_mangle]
pub unsafe extern "C" fn as_subset_select_ks(
    latencies: *const f64,
    count: usize,
    k: usize,
    lo: f64,
    hi: f64,
    seed: u64,
    mask_out: *mut u8,
) -> AsStatus {
    guard(|| {
        let lat = slice_arg(latencies, count, "latencies")?;
        if lat.iter().any(|l| !l.is_finite()) || !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Failure::invalid("latencies and bounds must be finite with lo <= hi"));
        }
        let dst = slice_out(mask_out, count, "mask_out")?;
        let mask = subset_select_ks(lat, k, &KsGaConfig::default(), lo, hi, seed);
        for (d, &m) in dst.iter_mut().zip(&mask.0) {
            *d = u8::from(m);
        }
        Ok(())
    })
}

/// Runs a full search from a configuration source (preset, TOML file or run
/// manifest) and writes `archive.csv` and `trace.csv` into `out_dir`.
/// `evaluations` and `hypervolume` may be NULL.
///
/// # Safety
/// `config_source` and `out_dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn as_search_run(
    config_source: *const c_char,
    out_dir: *const c_char,
    evaluations: *mut usize,
    hypervolume: *mut f64,
) -> AsStatus {
    guard(|| {
        let source = str_arg(config_source, "config_source")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let cfg = config::load(source, &[]).map_err(|e| Failure::invalid(e.to_string()))?;
        let space = config::resolve_space(&cfg.space).map_err(|e| Failure::invalid(e.to_string()))?;
        let table = config::resolve_table(&cfg, &space).map_err(|e| Failure::invalid(e.to_string()))?;
        let mut evaluator = cfg.evaluator.build(&space, &table).map_err(|e| Failure::invalid(e.to_string()))?;
        let mut observer = Checkpointer(dir.into());
        let outcome = run_search(&cfg, &space, &table, evaluator.as_mut(), &mut observer)
            .map_err(|e| Failure(AsStatus::AsErrRuntime, e.to_string()))?;
        archsearch::search::write_checkpoint(Path::new(dir), &outcome.archive, &outcome.trace)
            .map_err(|e| Failure(AsStatus::AsErrIo, e.to_string()))?;
        if !evaluations.is_null() {
            *evaluations = outcome.evaluations;
        }
        if !hypervolume.is_null() {
            *hypervolume = outcome.archive.hypervolume();
        }
        Ok(())
    })
}
