//! C ABI over `rst-core`.
//!
//! Objects cross the boundary as opaque handles created by `rst_*_new` or
//! a computing function and released with the matching `rst_*_free`. Every
//! fallible call returns an [`RstStatus`]; on failure the message is
//! available from [`rst_last_error`] until the next failing call on the
//! same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rst_core::diagram::{project, read_diagram_csv, DataDim, ModelConfig, PersistenceDiagram};
use rst_core::error::{Error, ErrorKind};
use rst_core::estimation::{fit, FittedModel, OptimizerSettings, QuadratureSpec};
use rst_core::field::{kde_grid, sample_two_circles, superlevel_h0, superlevel_h1, GridSpec};
use rst_core::inference::{bh_fdr, bonferroni, order_stat_test};
use rst_core::replication::{replicate, ChainOptions, ReplicateEnsemble, Schedule};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RstStatus {
    Ok = 0,
    Invalid = 1,
    Parse = 2,
    Io = 3,
    Numeric = 4,
    NullPointer = 5,
    Panic = 6,
}

impl From<&Error> for RstStatus {
    fn from(e: &Error) -> Self {
        match e.kind() {
            ErrorKind::Invalid => RstStatus::Invalid,
            ErrorKind::Parse => RstStatus::Parse,
            ErrorKind::Io => RstStatus::Io,
            ErrorKind::Numeric => RstStatus::Numeric,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RstStatus, msg: &str) -> RstStatus {
    set_error(msg);
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (RstStatus, String)>) -> RstStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RstStatus::Ok,
        Ok(Err((status, msg))) => fail(status, &msg),
        Err(_) => fail(RstStatus::Panic, "internal panic"),
    }
}

fn core_err(e: Error) -> (RstStatus, String) {
    (RstStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (RstStatus, String) {
    (RstStatus::NullPointer, format!("{what} is null"))
}

/// Borrowed slice from a pointer and length; null is allowed when `len == 0`.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (RstStatus, String)> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (RstStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), (RstStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// A persistence diagram of one homology degree.
pub struct RstDiagram {
    inner: PersistenceDiagram,
}

/// A fitted Gibbs model.
pub struct RstModel {
    inner: FittedModel,
}

/// Replicate diagrams simulated from a fitted model.
pub struct RstEnsemble {
    inner: ReplicateEnsemble,
}

/// Message of the last failed call on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn rst_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Finite diagram from `n` birth and death values.
///
/// # Safety
/// `births` and `deaths` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rst_diagram_new(
    degree: usize,
    births: *const f64,
    deaths: *const f64,
    n: usize,
    out: *mut *mut RstDiagram,
) -> RstStatus {
    guard(|| {
        let b = slice(births, n, "births")?;
        let d = slice(deaths, n, "deaths")?;
        let pairs: Vec<(f64, f64)> = b.iter().copied().zip(d.iter().copied()).collect();
        let inner = PersistenceDiagram::from_pairs(degree, &pairs).map_err(core_err)?;
        store(out, RstDiagram { inner })
    })
}

/// Reads a single-degree diagram CSV (`degree,birth,death,essential`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rst_diagram_read_csv(path: *const c_char, out: *mut *mut RstDiagram) -> RstStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (RstStatus::Invalid, "path is not UTF-8".to_string()))?;
        let inner = read_diagram_csv(Path::new(path)).map_err(core_err)?;
        store(out, RstDiagram { inner })
    })
}

/// H0 (`degree == 0`) or H1 superlevel diagram of the KDE of a two-circles sample.
/// Essential classes are dropped.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rst_two_circles_diagram(
    n_large: usize,
    n_small: usize,
    diam_large: f64,
    diam_small: f64,
    bandwidth: f64,
    grid: usize,
    degree: usize,
    seed: u64,
    out: *mut *mut RstDiagram,
) -> RstStatus {
    guard(|| {
        let cloud = sample_two_circles(n_large, n_small, diam_large, diam_small, None, seed).map_err(core_err)?;
        let spec: GridSpec = grid.to_string().parse().map_err(core_err)?;
        let g = kde_grid(&cloud, bandwidth, spec).map_err(core_err)?;
        let pd = match degree {
            0 => superlevel_h0(&g),
            1 => superlevel_h1(&g),
            _ => return Err((RstStatus::Invalid, format!("degree {degree} is not 0 or 1"))),
        };
        store(out, RstDiagram { inner: pd.without_essential() })
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `pd` must be null or a live diagram handle.
#[no_mangle]
pub unsafe extern "C" fn rst_diagram_len(pd: *const RstDiagram) -> usize {
    pd.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `pd` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rst_diagram_free(pd: *mut RstDiagram) {
    if !pd.is_null() {
        drop(Box::from_raw(pd));
    }
}

/// Fits the Gibbs model with `k_max` cluster terms. `data_dim == 0` means unknown.
///
/// # Safety
/// `pd` must be a live diagram handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rst_fit(
    pd: *const RstDiagram,
    k_max: usize,
    delta_star: f64,
    data_dim: u32,
    seed: u64,
    out: *mut *mut RstModel,
) -> RstStatus {
    guard(|| {
        let pd = handle(pd, "diagram")?;
        let ppd = project(&pd.inner.without_essential()).map_err(core_err)?;
        let dim = if data_dim == 0 { DataDim::Unknown } else { DataDim::Known(data_dim) };
        let config = ModelConfig::resolve(&ppd, k_max, delta_star, dim, pd.inner.degree()).map_err(core_err)?;
        let settings = OptimizerSettings {
            jitter_seed: seed,
            ..Default::default()
        };
        let inner = fit(&ppd, &config, &QuadratureSpec::default(), &settings).map_err(core_err)?;
        store(out, RstModel { inner })
    })
}

/// Number of parameters: `2 + K`.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn rst_model_param_count(model: *const RstModel) -> usize {
    model.as_ref().map_or(0, |m| 2 + m.inner.theta.k_max())
}

/// Copies `(theta_H, theta_V, theta_1, ..., theta_K)` into `out`.
///
/// # Safety
/// `model` must be live; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rst_model_theta(model: *const RstModel, out: *mut f64, len: usize) -> RstStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let theta = m.inner.theta.to_vec();
        if len < theta.len() {
            return Err((RstStatus::Invalid, format!("buffer holds {len}, need {}", theta.len())));
        }
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(theta.as_ptr(), out, theta.len());
        Ok(())
    })
}

/// Model as JSON; release with [`rst_string_free`]. Null on failure.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn rst_model_to_json(model: *const RstModel) -> *mut c_char {
    let Some(m) = model.as_ref() else {
        set_error("model is null");
        return ptr::null_mut();
    };
    match m.inner.to_json() {
        Ok(s) => CString::new(s).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rst_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rst_model_free(model: *mut RstModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates `n_b`-spaced replicates: `n_chains` chains of `n_r` each.
///
/// # Safety
/// `pd` must be the diagram `model` was fitted to; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rst_replicate(
    pd: *const RstDiagram,
    model: *const RstModel,
    burn_in: usize,
    n_b: usize,
    n_r: usize,
    n_chains: usize,
    seed: u64,
    out: *mut *mut RstEnsemble,
) -> RstStatus {
    guard(|| {
        let pd = handle(pd, "diagram")?;
        let m = handle(model, "model")?;
        let ppd = project(&pd.inner.without_essential()).map_err(core_err)?;
        let schedule = Schedule::new(burn_in, n_b, n_r, n_chains, seed).map_err(core_err)?;
        let inner = replicate(&ppd, &m.inner, &schedule, ChainOptions::default()).map_err(core_err)?;
        store(out, RstEnsemble { inner })
    })
}

/// # Safety
/// `ens` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn rst_ensemble_len(ens: *const RstEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.inner.replicates.len())
}

/// # Safety
/// `ens` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rst_ensemble_free(ens: *mut RstEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// Add-one p-values of the `j` largest persistences; written to `p_values[0..j]`.
///
/// # Safety
/// Handles must be live; `p_values` must have room for `j` doubles.
#[no_mangle]
pub unsafe extern "C" fn rst_order_stat_test(
    pd: *const RstDiagram,
    ens: *const RstEnsemble,
    j: usize,
    p_values: *mut f64,
) -> RstStatus {
    guard(|| {
        let pd = handle(pd, "diagram")?;
        let ens = handle(ens, "ensemble")?;
        if p_values.is_null() && j > 0 {
            return Err(null("p_values"));
        }
        let report = order_stat_test(&pd.inner, &ens.inner.replicates, j).map_err(core_err)?;
        for (k, row) in report.rows.iter().enumerate() {
            *p_values.add(k) = row.p_value;
        }
        Ok(())
    })
}

unsafe fn rejections(
    rule: fn(&[f64], f64) -> rst_core::error::Result<Vec<usize>>,
    p: *const f64,
    m: usize,
    alpha: f64,
    reject: *mut u8,
) -> RstStatus {
    guard(|| {
        let p = slice(p, m, "p")?;
        if reject.is_null() && m > 0 {
            return Err(null("reject"));
        }
        let set = rule(p, alpha).map_err(core_err)?;
        for i in 0..m {
            *reject.add(i) = 0;
        }
        for i in set {
            *reject.add(i) = 1;
        }
        Ok(())
    })
}

/// Benjamini-Hochberg step-up; `reject[i]` is set to 1 for rejected hypotheses.
///
/// # Safety
/// `p` must hold `m` doubles and `reject` `m` bytes.
#[no_mangle]
pub unsafe extern "C" fn rst_bh_fdr(p: *const f64, m: usize, alpha: f64, reject: *mut u8) -> RstStatus {
    rejections(bh_fdr, p, m, alpha, reject)
}

/// Bonferroni: rejects `p <= alpha / m`.
///
/// # Safety
/// `p` must hold `m` doubles and `reject` `m` bytes.
#[no_mangle]
pub unsafe extern "C" fn rst_bonferroni(p: *const f64, m: usize, alpha: f64, reject: *mut u8) -> RstStatus {
    rejections(bonferroni, p, m, alpha, reject)
}
