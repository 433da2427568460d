//! C interface to the Volterra Heston library.
//!
//! Objects are opaque heap handles created by `vh_*_new`-style functions and
//! released by the matching `vh_*_free`. Every fallible call returns a
//! [`VhStatus`]; the message of the last failure on the calling thread is
//! available through [`vh_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use volterra_heston::curves::{check_admissible, InputCurve};
use volterra_heston::montecarlo::{simulate, PathSet, Storage};
use volterra_heston::transform::{fourier_laplace, Pricer, PricingOptions};
use volterra_heston::{Error, FLArgument, Kernel, ModelParams, Scheme, TimeGrid};

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VhStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Numerical = 3,
    Blowup = 4,
    State = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

/// Model constants.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VhParams {
    pub lambda: f64,
    pub nu: f64,
    pub rho: f64,
    pub s0: f64,
}

/// Opaque kernel handle.
pub struct VhKernel(Kernel);
/// Opaque input-curve handle.
pub struct VhCurve(InputCurve);
/// Opaque call pricer.
pub struct VhPricer(Pricer);
/// Opaque set of simulated paths.
pub struct VhPathSet(PathSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VhStatus {
    match e {
        Error::Domain(_) => VhStatus::Domain,
        Error::NumericalFailure { .. } => VhStatus::Numerical,
        Error::Blowup { .. } => VhStatus::Blowup,
        Error::State(_) => VhStatus::State,
        Error::Config(_) => VhStatus::Config,
        Error::Io(_) => VhStatus::Io,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard<F>(f: F) -> VhStatus
where
    F: FnOnce() -> Result<(), VhFail>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VhStatus::Ok,
        Ok(Err(VhFail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            VhStatus::NullPointer
        }
        Ok(Err(VhFail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside the library".into());
            VhStatus::Panic
        }
    }
}

enum VhFail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for VhFail {
    fn from(e: Error) -> Self {
        VhFail::Lib(e)
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, VhFail> {
    p.as_ref().ok_or(VhFail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, VhFail> {
    p.as_mut().ok_or(VhFail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], VhFail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(VhFail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn params(p: &VhParams) -> Result<ModelParams, VhFail> {
    Ok(ModelParams::new(p.lambda, p.nu, p.rho, p.s0)?)
}

fn boxed<T>(dst: *mut *mut T, value: T) -> Result<(), VhFail> {
    let dst = unsafe { out(dst, "out")? };
    *dst = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn vh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (nul-terminated,
/// truncated to `len`). Returns the full message length, 0 if none.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn vh_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// `c t^{α−1}/Γ(α)`, `α ∈ (1/2, 1]`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vh_kernel_fractional(
    c: f64,
    alpha: f64,
    out: *mut *mut VhKernel,
) -> VhStatus {
    guard(|| boxed(out, VhKernel(Kernel::fractional(c, alpha)?)))
}

/// `c e^{−λt} t^{α−1}/Γ(α)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vh_kernel_gamma(
    c: f64,
    alpha: f64,
    lambda: f64,
    out: *mut *mut VhKernel,
) -> VhStatus {
    guard(|| boxed(out, VhKernel(Kernel::gamma(c, alpha, lambda)?)))
}

/// `Σ weights[i] e^{−rates[i] t}`.
///
/// # Safety
/// `weights` and `rates` must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_kernel_expsum(
    weights: *const f64,
    rates: *const f64,
    n: usize,
    out: *mut *mut VhKernel,
) -> VhStatus {
    guard(|| {
        let w = slice(weights, n, "weights")?;
        let r = slice(rates, n, "rates")?;
        let pairs: Vec<(f64, f64)> = w.iter().copied().zip(r.iter().copied()).collect();
        boxed(out, VhKernel(Kernel::exp_sum(&pairs)?))
    })
}

/// # Safety
/// `k` must come from a `vh_kernel_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn vh_kernel_free(k: *mut VhKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// `K(t)`; `t = 0` on a singular kernel is a domain error.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_kernel_value(k: *const VhKernel, t: f64, value: *mut f64) -> VhStatus {
    guard(|| {
        *out(value, "value")? = deref(k, "kernel")?.0.eval(t)?;
        Ok(())
    })
}

/// `g_0 ≡ v`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_curve_flat(v: f64, out: *mut *mut VhCurve) -> VhStatus {
    guard(|| {
        if v.is_nan() || v < 0.0 {
            return Err(Error::Domain(format!("flat curve needs v >= 0, got {v}")).into());
        }
        boxed(out, VhCurve(InputCurve::flat(v)))
    })
}

/// `g_0(t) = V_0 + λθ ∫_0^t K`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_curve_classical(
    v0: f64,
    theta: f64,
    lambda: f64,
    k: *const VhKernel,
    out: *mut *mut VhCurve,
) -> VhStatus {
    guard(|| {
        let k = deref(k, "kernel")?;
        boxed(
            out,
            VhCurve(InputCurve::classical(v0, theta, lambda, &k.0)?),
        )
    })
}

/// Piecewise-linear curve through `(times[i], values[i])`, flat outside.
///
/// # Safety
/// `times` and `values` must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_curve_tabulated(
    times: *const f64,
    values: *const f64,
    n: usize,
    out: *mut *mut VhCurve,
) -> VhStatus {
    guard(|| {
        let t = slice(times, n, "times")?.to_vec();
        let v = slice(values, n, "values")?.to_vec();
        boxed(out, VhCurve(InputCurve::tabulated(t, v)?))
    })
}

/// # Safety
/// `c` must come from a `vh_curve_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn vh_curve_free(c: *mut VhCurve) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_curve_eval(c: *const VhCurve, t: f64, value: *mut f64) -> VhStatus {
    guard(|| {
        *out(value, "value")? = deref(c, "curve")?.0.eval(t);
        Ok(())
    })
}

/// Admissibility check on the grid `(dt, horizon)` over its dyadic shift
/// ladder. `tol < 0` selects the default tolerance.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_curve_check(
    c: *const VhCurve,
    k: *const VhKernel,
    dt: f64,
    horizon: f64,
    tol: f64,
    pass: *mut bool,
    worst: *mut f64,
) -> VhStatus {
    guard(|| {
        let grid = TimeGrid::with_horizon(horizon, dt)?;
        let tol = (tol >= 0.0).then_some(tol);
        let r = check_admissible(
            &deref(c, "curve")?.0,
            &deref(k, "kernel")?.0,
            &grid,
            None,
            tol,
        )?;
        *out(pass, "pass")? = r.pass;
        *out(worst, "worst")? = r.worst_violation;
        Ok(())
    })
}

/// `E[exp(iz log S_T)]` with `T = horizon`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_charfn(
    k: *const VhKernel,
    p: *const VhParams,
    c: *const VhCurve,
    dt: f64,
    horizon: f64,
    z: f64,
    re: *mut f64,
    im: *mut f64,
) -> VhStatus {
    guard(|| {
        let grid = TimeGrid::with_horizon(horizon, dt)?;
        let p = params(deref(p, "params")?)?;
        let v = fourier_laplace(
            &deref(k, "kernel")?.0,
            &p,
            &deref(c, "curve")?.0,
            &FLArgument::charfn(z),
            &grid,
            Scheme::PredictorCorrector,
        )?;
        *out(re, "re")? = v.value.re;
        *out(im, "im")? = v.value.im;
        Ok(())
    })
}

/// Fourier pricer for maturity `horizon`, truncated for the given strikes.
/// `damping ≤ 0` selects the default contour.
///
/// # Safety
/// `strikes` must hold `n` values; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_pricer_new(
    k: *const VhKernel,
    p: *const VhParams,
    c: *const VhCurve,
    dt: f64,
    horizon: f64,
    strikes: *const f64,
    n: usize,
    damping: f64,
    out: *mut *mut VhPricer,
) -> VhStatus {
    guard(|| {
        let grid = TimeGrid::with_horizon(horizon, dt)?;
        let p = params(deref(p, "params")?)?;
        let mut opts = PricingOptions::default();
        if damping > 0.0 {
            opts.damping = damping;
        }
        let pricer = Pricer::new(
            &deref(k, "kernel")?.0,
            &p,
            &deref(c, "curve")?.0,
            &grid,
            slice(strikes, n, "strikes")?,
            &opts,
        )?;
        boxed(out, VhPricer(pricer))
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_pricer_call(
    p: *const VhPricer,
    strike: f64,
    price: *mut f64,
) -> VhStatus {
    guard(|| {
        *out(price, "price")? = deref(p, "pricer")?.0.call(strike);
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_pricer_put(
    p: *const VhPricer,
    strike: f64,
    price: *mut f64,
) -> VhStatus {
    guard(|| {
        *out(price, "price")? = deref(p, "pricer")?.0.put(strike);
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`vh_pricer_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn vh_pricer_free(p: *mut VhPricer) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Euler paths on `(dt, horizon)` with full storage. Output depends only on
/// `seed`, not on the thread count.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_simulate(
    k: *const VhKernel,
    p: *const VhParams,
    c: *const VhCurve,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    out: *mut *mut VhPathSet,
) -> VhStatus {
    guard(|| {
        let grid = TimeGrid::with_horizon(horizon, dt)?;
        let p = params(deref(p, "params")?)?;
        let ps = simulate(
            &p,
            &deref(c, "curve")?.0,
            &deref(k, "kernel")?.0,
            &grid,
            n_paths,
            seed,
            Storage::Full { increments: false },
        )?;
        boxed(out, VhPathSet(ps))
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_pathset_dims(
    ps: *const VhPathSet,
    n_paths: *mut usize,
    n_steps: *mut usize,
) -> VhStatus {
    guard(|| {
        let ps = &deref(ps, "pathset")?.0;
        *out(n_paths, "n_paths")? = ps.n_paths;
        *out(n_steps, "n_steps")? = ps.grid.n_steps();
        Ok(())
    })
}

/// `V` and `log S` of path `i` at node `j`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vh_pathset_value(
    ps: *const VhPathSet,
    i: usize,
    j: usize,
    v: *mut f64,
    log_s: *mut f64,
) -> VhStatus {
    guard(|| {
        let ps = &deref(ps, "pathset")?.0;
        if i >= ps.n_paths || j > ps.grid.n_steps() {
            return Err(Error::Domain(format!("index ({i}, {j}) out of range")).into());
        }
        *out(v, "v")? = ps.v_at(i, j)?;
        *out(log_s, "log_s")? = ps.log_s_at(i, j)?;
        Ok(())
    })
}

/// Writes the binary `VHPS` layout to `path`.
///
/// # Safety
/// `path` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vh_pathset_write(ps: *const VhPathSet, path: *const c_char) -> VhStatus {
    guard(|| {
        let ps = &deref(ps, "pathset")?.0;
        if path.is_null() {
            return Err(VhFail::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::Domain("path is not UTF-8".into()))?;
        std::fs::write(path, ps.to_bytes()?).map_err(Error::from)?;
        Ok(())
    })
}

/// # Safety
/// `ps` must come from [`vh_simulate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn vh_pathset_free(ps: *mut VhPathSet) {
    if !ps.is_null() {
        drop(Box::from_raw(ps));
    }
}
