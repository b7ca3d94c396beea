//! C interface to `certeq`.
//!
//! Matrices cross the boundary as row-major `double` arrays. Every fallible
//! call returns a [`CqStatus`]; on failure the message is kept per thread and
//! read back with [`certeq_last_error`]. Handles are opaque and owned by the
//! caller, who releases them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use certeq::linalg::{spectral_radius, Mat};
use certeq::lqg::{lqg_cost, lqg_optimal, LqgOptimal, LqgSystem};
use certeq::lqr_eval::{cost_of_gain, exact_gap};
use certeq::riccati::{solve_dare, CostParams, LinearSystem, RiccatiSolution};
use certeq::transient::tau;
use certeq::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqStatus {
    Ok = 0,
    NullPointer = 1,
    /// Wrong dimensions, shapes or non-finite entries.
    InvalidArgument = 2,
    Singular = 3,
    Convergence = 4,
    Unstable = 5,
    NotStabilizable = 6,
    NotDetectable = 7,
    NotControllable = 8,
    Domain = 9,
    Diverged = 10,
    InvalidCost = 11,
    /// The output buffer is shorter than the result; nothing was written.
    BufferTooSmall = 12,
    Panic = 13,
    Other = 14,
}

fn status_of(e: &Error) -> CqStatus {
    match e {
        Error::Dimension(_) | Error::NonFinite { .. } | Error::Shape { .. } => CqStatus::InvalidArgument,
        Error::Singular { .. } => CqStatus::Singular,
        Error::Convergence { .. } => CqStatus::Convergence,
        Error::Stability { .. } => CqStatus::Unstable,
        Error::Stabilizability(_) => CqStatus::NotStabilizable,
        Error::Detectability(_) => CqStatus::NotDetectable,
        Error::Controllability { .. } => CqStatus::NotControllable,
        Error::Domain(_) => CqStatus::Domain,
        Error::Divergence { .. } => CqStatus::Diverged,
        Error::Cost(_) => CqStatus::InvalidCost,
        Error::Fit(_) => CqStatus::Other,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    bytes.push(0);
    LAST_ERROR.with(|e| *e.borrow_mut() = bytes);
}

struct Fail(CqStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CqStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CqStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            CqStatus::Panic
        }
    }
}

/// # Safety
/// `data` must be null or point to `rows * cols` readable doubles.
unsafe fn read_mat(name: &str, data: *const f64, rows: usize, cols: usize) -> Result<Mat, Fail> {
    if data.is_null() {
        return Err(null(name));
    }
    let len = rows.checked_mul(cols).ok_or_else(|| Fail(CqStatus::InvalidArgument, format!("{name} is too large")))?;
    let v = std::slice::from_raw_parts(data, len).to_vec();
    Ok(Mat::new(rows, cols, v)?)
}

/// # Safety
/// `out` must be null or point to `len` writable doubles.
unsafe fn write_mat(m: &Mat, out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    let data = m.data();
    if len < data.len() {
        return Err(Fail(CqStatus::BufferTooSmall, format!("need {} doubles, got {len}", data.len())));
    }
    ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    Ok(())
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// LQR instance: dynamics and quadratic costs.
pub struct CqSystem {
    sys: LinearSystem,
    cost: CostParams,
}

/// Solution of the control Riccati equation.
pub struct CqSolution {
    sol: RiccatiSolution,
}

/// LQG plant with its optimal controller, computed on creation.
pub struct CqLqg {
    plant: LqgSystem,
    opt: LqgOptimal,
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn certeq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        if e.is_empty() {
            e.push(0);
        }
        e.as_ptr() as *const c_char
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn certeq_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version has no interior nul"),
    };
    VERSION.as_ptr()
}

/// Create a system from `A` (n×n), `B` (n×d), `Q` (n×n) and `R` (d×d).
///
/// # Safety
/// The matrix pointers must reference arrays of the stated sizes and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn certeq_system_new(
    n: usize,
    d: usize,
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    out: *mut *mut CqSystem,
) -> CqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sys = LinearSystem::new(read_mat("A", a, n, n)?, read_mat("B", b, n, d)?)?;
        let cost = CostParams::new(read_mat("Q", q, n, n)?, read_mat("R", r, d, d)?)?;
        cost.check_against(&sys)?;
        out.write(Box::into_raw(Box::new(CqSystem { sys, cost })));
        Ok(())
    })
}

/// # Safety
/// `sys` must be null or a handle from [`certeq_system_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn certeq_system_free(sys: *mut CqSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Solve the control Riccati equation of `sys`.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn certeq_solve_dare(sys: *const CqSystem, out: *mut *mut CqSolution) -> CqStatus {
    guard(|| {
        let s = deref(sys, "sys")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sol = solve_dare(&s.sys, &s.cost)?;
        out.write(Box::into_raw(Box::new(CqSolution { sol })));
        Ok(())
    })
}

/// # Safety
/// `sol` must be null or a handle from [`certeq_solve_dare`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn certeq_solution_free(sol: *mut CqSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Copy `P` (n×n) into `out`, which holds `len` doubles.
///
/// # Safety
/// `sol` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn certeq_solution_p(sol: *const CqSolution, out: *mut f64, len: usize) -> CqStatus {
    guard(|| write_mat(&deref(sol, "sol")?.sol.p, out, len))
}

/// Copy the gain `K` (d×n), with `u = K x`.
///
/// # Safety
/// As [`certeq_solution_p`].
#[no_mangle]
pub unsafe extern "C" fn certeq_solution_k(sol: *const CqSolution, out: *mut f64, len: usize) -> CqStatus {
    guard(|| write_mat(&deref(sol, "sol")?.sol.k, out, len))
}

/// Residual of the Riccati equation at the returned `P`.
///
/// # Safety
/// `sol` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn certeq_solution_residual(sol: *const CqSolution, out: *mut f64) -> CqStatus {
    guard(|| write(out, deref(sol, "sol")?.sol.residual))
}

/// Average cost `J(K)` of the gain `k` (d×n) under noise `sigma_w² I`.
///
/// # Safety
/// `sys` must be a live handle, `k` must hold d·n doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn certeq_cost_of_gain(sys: *const CqSystem, k: *const f64, sigma_w: f64, out: *mut f64) -> CqStatus {
    guard(|| {
        let s = deref(sys, "sys")?;
        let k = read_mat("K", k, s.sys.d(), s.sys.n())?;
        write(out, cost_of_gain(&s.sys, &s.cost, &k, sigma_w)?)
    })
}

/// Suboptimality gap `J(K) - J(K⋆)` by the exact trace formula.
///
/// # Safety
/// As [`certeq_cost_of_gain`].
#[no_mangle]
pub unsafe extern "C" fn certeq_exact_gap(sys: *const CqSystem, k: *const f64, sigma_w: f64, out: *mut f64) -> CqStatus {
    guard(|| {
        let s = deref(sys, "sys")?;
        let k = read_mat("K", k, s.sys.d(), s.sys.n())?;
        let sol = solve_dare(&s.sys, &s.cost)?;
        write(out, exact_gap(&s.sys, &s.cost, &sol, &k, sigma_w)?.gap)
    })
}

/// Spectral radius of the n×n matrix `m`.
///
/// # Safety
/// `m` must hold n·n doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn certeq_spectral_radius(m: *const f64, n: usize, out: *mut f64) -> CqStatus {
    guard(|| write(out, spectral_radius(&read_mat("M", m, n, n)?)?))
}

/// `τ(M, ρ) = sup_k ‖M^k‖ ρ^(-k)` for `ρ(M) < ρ`.
///
/// # Safety
/// As [`certeq_spectral_radius`].
#[no_mangle]
pub unsafe extern "C" fn certeq_tau(m: *const f64, n: usize, rho: f64, out: *mut f64) -> CqStatus {
    guard(|| write(out, tau(&read_mat("M", m, n, n)?, rho)?.tau))
}

/// Create an LQG plant and solve for its optimal controller. Dimensions:
/// `A` n×n, `B` n×d, `C` p×n, `W` n×n, `V` p×p, `Q` p×p (output cost), `R` d×d.
///
/// # Safety
/// The matrix pointers must reference arrays of the stated sizes and `out`
/// must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn certeq_lqg_new(
    n: usize,
    d: usize,
    p: usize,
    a: *const f64,
    b: *const f64,
    c: *const f64,
    w: *const f64,
    v: *const f64,
    q: *const f64,
    r: *const f64,
    out: *mut *mut CqLqg,
) -> CqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let plant = LqgSystem::new(
            read_mat("A", a, n, n)?,
            read_mat("B", b, n, d)?,
            read_mat("C", c, p, n)?,
            read_mat("W", w, n, n)?,
            read_mat("V", v, p, p)?,
            read_mat("Q", q, p, p)?,
            read_mat("R", r, d, d)?,
        )?;
        let opt = lqg_optimal(&plant)?;
        out.write(Box::into_raw(Box::new(CqLqg { plant, opt })));
        Ok(())
    })
}

/// # Safety
/// `lqg` must be null or a handle from [`certeq_lqg_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn certeq_lqg_free(lqg: *mut CqLqg) {
    if !lqg.is_null() {
        drop(Box::from_raw(lqg));
    }
}

/// Optimal average cost `J⋆`.
///
/// # Safety
/// `lqg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn certeq_lqg_optimal_cost(lqg: *const CqLqg, out: *mut f64) -> CqStatus {
    guard(|| write(out, deref(lqg, "lqg")?.opt.j_star))
}

/// Copy the Kalman gain (n×p), used as `x̂' = A x̂ + B u + L (y - C x̂)`.
///
/// # Safety
/// `lqg` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn certeq_lqg_kalman_gain(lqg: *const CqLqg, out: *mut f64, len: usize) -> CqStatus {
    guard(|| write_mat(&deref(lqg, "lqg")?.opt.kalman.gain, out, len))
}

/// Copy the optimal state-feedback gain (d×n).
///
/// # Safety
/// As [`certeq_lqg_kalman_gain`].
#[no_mangle]
pub unsafe extern "C" fn certeq_lqg_control_gain(lqg: *const CqLqg, out: *mut f64, len: usize) -> CqStatus {
    guard(|| write_mat(&deref(lqg, "lqg")?.opt.k, out, len))
}

/// Exact cost of the observer-controller with matrices `a_hat` (n×n),
/// `b_hat` (n×d), `c_hat` (p×n), `k_hat` (d×n) and `l_hat` (n×p) on the plant.
///
/// # Safety
/// The matrix pointers must reference arrays of the stated sizes and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn certeq_lqg_cost(
    lqg: *const CqLqg,
    a_hat: *const f64,
    b_hat: *const f64,
    c_hat: *const f64,
    k_hat: *const f64,
    l_hat: *const f64,
    out: *mut f64,
) -> CqStatus {
    guard(|| {
        let h = deref(lqg, "lqg")?;
        let (n, d, p) = (h.plant.n(), h.plant.d(), h.plant.p());
        let oc = certeq::lqg::ObserverController {
            a_hat: read_mat("A_hat", a_hat, n, n)?,
            b_hat: read_mat("B_hat", b_hat, n, d)?,
            c_hat: read_mat("C_hat", c_hat, p, n)?,
            k_hat: read_mat("K_hat", k_hat, d, n)?,
            l_hat: read_mat("L_hat", l_hat, n, p)?,
        };
        write(out, lqg_cost(&h.plant, &oc)?)
    })
}
