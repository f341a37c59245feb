//! C ABI over the core library. Objects cross the boundary as opaque
//! handles owned by the caller and released with the matching `_free`.
//! Every fallible call returns a [`PrinstratStatus`]; the message of the most
//! recent failure on the calling thread is available from
//! [`prinstrat_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use prinstrat::asymvar::{posterior_var_approx, AsymVarInputs, PosteriorVar};
use prinstrat::cli::{fit_dataset, FitConfig};
use prinstrat::gibbs::PosteriorDraws;
use prinstrat::pir::{region_report, Assumption, ObservedMoments};
use prinstrat::psmodel::{marginalize, Dataset, JointParams};
use prinstrat::{Error, ErrorKind};
use serde::Deserialize;

/// Status codes; the error classes share their values with the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrinstratStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    Panic = 5,
    InvalidUtf8 = 6,
}

/// Observed dataset.
pub struct PrinstratDataset {
    inner: Dataset,
}

/// Retained draws of one chain.
pub struct PrinstratDraws {
    inner: PosteriorDraws,
}

/// Inputs of the large-sample variance formula for the strata correlation.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrinstratAsymInputs {
    pub t_bar: f64,
    pub beta10: f64,
    pub beta01: f64,
    pub sigma_s0: f64,
    pub sigma_s1: f64,
    pub sigma_y2: f64,
    pub rho: f64,
    pub n: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: PrinstratStatus, msg: &str) -> PrinstratStatus {
    set_last_error(msg);
    status
}

fn from_error(e: Error) -> PrinstratStatus {
    let status = match e.kind() {
        ErrorKind::Config => PrinstratStatus::Config,
        ErrorKind::Data => PrinstratStatus::Data,
        ErrorKind::Numerical => PrinstratStatus::Numerical,
    };
    fail(status, &e.to_string())
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F>(f: F) -> PrinstratStatus
where
    F: FnOnce() -> Result<(), PrinstratStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            PrinstratStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PrinstratStatus::Panic, &msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, PrinstratStatus> {
    if p.is_null() {
        return Err(fail(PrinstratStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PrinstratStatus::InvalidUtf8, &format!("{what} is not UTF-8")))
}

fn null_check<T>(p: *const T, what: &str) -> Result<(), PrinstratStatus> {
    if p.is_null() {
        Err(fail(PrinstratStatus::NullPointer, &format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn json_error(e: serde_json::Error) -> PrinstratStatus {
    from_error(Error::Json(e))
}

fn to_c_string(s: String, out: *mut *mut c_char) -> Result<(), PrinstratStatus> {
    let c = CString::new(s).map_err(|e| fail(PrinstratStatus::Panic, &e.to_string()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn prinstrat_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `n` units into a new dataset. `t` entries must be 0 or 1.
///
/// # Safety
/// `y`, `t` and `s` must each point to `n` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_dataset_new(
    y: *const f64,
    t: *const u8,
    s: *const f64,
    n: usize,
    out: *mut *mut PrinstratDataset,
) -> PrinstratStatus {
    guard(|| {
        null_check(out, "out")?;
        *out = ptr::null_mut();
        if n == 0 {
            return Err(from_error(Error::Data("dataset needs at least one unit".into())));
        }
        null_check(y, "y")?;
        null_check(t, "t")?;
        null_check(s, "s")?;
        let (y, t, s) = (
            std::slice::from_raw_parts(y, n).to_vec(),
            std::slice::from_raw_parts(t, n).to_vec(),
            std::slice::from_raw_parts(s, n).to_vec(),
        );
        let inner = Dataset::new(y, t, s).map_err(from_error)?;
        *out = Box::into_raw(Box::new(PrinstratDataset { inner }));
        Ok(())
    })
}

/// Reads a dataset CSV with columns `y,t,s[,x1..][,s0,s1]`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_dataset_read_csv(
    path: *const c_char,
    out: *mut *mut PrinstratDataset,
) -> PrinstratStatus {
    guard(|| {
        null_check(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = Dataset::read_csv(path).map_err(from_error)?;
        *out = Box::into_raw(Box::new(PrinstratDataset { inner }));
        Ok(())
    })
}

/// Number of units; 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_dataset_len(data: *const PrinstratDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.n())
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_dataset_free(data: *mut PrinstratDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Runs one chain. `config_json` holds the fit config (`model`, `prior`,
/// `constraints`, `chain`); null means defaults.
///
/// # Safety
/// `data` must be a live handle, `config_json` null or NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_fit(
    data: *const PrinstratDataset,
    config_json: *const c_char,
    out: *mut *mut PrinstratDraws,
) -> PrinstratStatus {
    guard(|| {
        null_check(out, "out")?;
        *out = ptr::null_mut();
        null_check(data, "data")?;
        let mut cfg: FitConfig = if config_json.is_null() {
            FitConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?).map_err(json_error)?
        };
        if cfg.data.is_some() || cfg.out_dir.is_some() {
            return Err(from_error(Error::Config("`data` and `out_dir` are CLI-only keys".into())));
        }
        let (_, inner) = fit_dataset(&(*data).inner, &mut cfg).map_err(from_error)?;
        *out = Box::into_raw(Box::new(PrinstratDraws { inner }));
        Ok(())
    })
}

/// # Safety
/// `draws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_draws_len(draws: *const PrinstratDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.inner.n_draws())
}

/// # Safety
/// `draws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_draws_n_columns(draws: *const PrinstratDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.inner.columns.len())
}

/// Copies the named column into `buf`, which must hold exactly
/// `prinstrat_draws_len` values.
///
/// # Safety
/// `draws` must be a live handle, `name` NUL-terminated, `buf` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_draws_column(
    draws: *const PrinstratDraws,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> PrinstratStatus {
    guard(|| {
        null_check(draws, "draws")?;
        null_check(buf, "buf")?;
        let name = str_arg(name, "name")?;
        let col = (*draws).inner.column(name).map_err(from_error)?;
        if col.len() != len {
            return Err(fail(
                PrinstratStatus::Config,
                &format!("buffer holds {len} values, column has {}", col.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&col);
        Ok(())
    })
}

/// Posterior summary as JSON; release with [`prinstrat_string_free`].
///
/// # Safety
/// `draws` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_draws_summary_json(
    draws: *const PrinstratDraws,
    out: *mut *mut c_char,
) -> PrinstratStatus {
    guard(|| {
        null_check(out, "out")?;
        *out = ptr::null_mut();
        null_check(draws, "draws")?;
        let s = serde_json::to_string(&(*draws).inner.summary()).map_err(json_error)?;
        to_c_string(s, out)
    })
}

/// # Safety
/// `draws` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_draws_free(draws: *mut PrinstratDraws) {
    if !draws.is_null() {
        drop(Box::from_raw(draws));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionRequest {
    moments: Option<ObservedMoments>,
    truth: Option<JointParams>,
    rho: f64,
    assumption: Assumption,
}

/// Identification region for one correlation and assumption. The request is
/// `{"moments" | "truth": ..., "rho": r, "assumption": "none" | "same_sign" | "dominant"}`;
/// the region report is written as JSON to `out`.
///
/// # Safety
/// `request_json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_pir_json(
    request_json: *const c_char,
    out: *mut *mut c_char,
) -> PrinstratStatus {
    guard(|| {
        null_check(out, "out")?;
        *out = ptr::null_mut();
        let req: RegionRequest =
            serde_json::from_str(str_arg(request_json, "request_json")?).map_err(json_error)?;
        let m = match (req.moments, req.truth) {
            (Some(m), None) => m,
            (None, Some(t)) => {
                t.validate().map_err(from_error)?;
                ObservedMoments::from_marginal(&marginalize(&t, None))
            }
            _ => return Err(from_error(Error::Config("give exactly one of moments and truth".into()))),
        };
        if !(req.rho.abs() < 1.0) {
            return Err(from_error(Error::Config(format!("rho must lie in (-1, 1), got {}", req.rho))));
        }
        let r = region_report(&m, req.rho, req.assumption).map_err(from_error)?;
        to_c_string(serde_json::to_string(&r).map_err(json_error)?, out)
    })
}

/// Large-sample posterior variance of `rho`. `*estimable` is 0 and `*value`
/// NaN when the data carry no information on `rho`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn prinstrat_posterior_var(
    inputs: *const PrinstratAsymInputs,
    value: *mut f64,
    estimable: *mut i32,
) -> PrinstratStatus {
    guard(|| {
        null_check(inputs, "inputs")?;
        null_check(value, "value")?;
        null_check(estimable, "estimable")?;
        let i = *inputs;
        let n = usize::try_from(i.n).map_err(|_| fail(PrinstratStatus::Config, "n overflows usize"))?;
        let v = posterior_var_approx(&AsymVarInputs {
            t_bar: i.t_bar,
            beta10: i.beta10,
            beta01: i.beta01,
            sigma_s0: i.sigma_s0,
            sigma_s1: i.sigma_s1,
            sigma_y2: i.sigma_y2,
            rho: i.rho,
            n,
        })
        .map_err(from_error)?;
        match v {
            PosteriorVar::Finite(x) => {
                *value = x;
                *estimable = 1;
            }
            PosteriorVar::NotEstimable => {
                *value = f64::NAN;
                *estimable = 0;
            }
        }
        Ok(())
    })
}
