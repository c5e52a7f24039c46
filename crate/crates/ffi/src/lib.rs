//! C interface to blendsync.
//!
//! Objects are opaque handles created by the `bs_*_from_*`, `*_simulate` and
//! `*_limiting` functions and released with the matching `bs_*_free`. Every
//! fallible call returns a [`BsStatus`]; the message of the most recent
//! failure on the calling thread is available through [`bs_last_error`].
//! Matrices cross the boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use blendsync::blended::{limiting_solution, BlendedSystem};
use blendsync::cli::scenario::Scenario;
use blendsync::dynamics::NetworkSystem;
use blendsync::simulate::{simulate_blended, simulate_network, SimulationOptions, Trajectory};
use blendsync::Error;
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed or inconsistent scenario.
    Config = 3,
    /// Integration blew up, a certificate was refused, or a factorization failed.
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

pub struct BsScenario(Scenario);

pub struct BsNetwork(NetworkSystem);

pub struct BsTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> BsStatus {
    match e {
        Error::Config(_) => BsStatus::Config,
        Error::Io(_) => BsStatus::Io,
        e if e.is_numerical() => BsStatus::Numerical,
        _ => BsStatus::InvalidArgument,
    }
}

/// Run `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (BsStatus, String)>) -> BsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            BsStatus::Panic
        }
    }
}

fn lib<T>(r: blendsync::Result<T>) -> Result<T, (BsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (BsStatus, String) {
    (BsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (BsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (BsStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (BsStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_slice(dst: *mut f64, cap: usize, src: &[f64], what: &str) -> Result<(), (BsStatus, String)> {
    if cap < src.len() {
        return Err((
            BsStatus::BufferTooSmall,
            format!("{what}: buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null(what));
    }
    std::slice::from_raw_parts_mut(dst, src.len()).copy_from_slice(src);
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Message of the last failure on this thread, or null if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse and validate a JSON scenario.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_scenario_from_json(json: *const c_char, out: *mut *mut BsScenario) -> BsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (BsStatus::InvalidArgument, format!("json is not UTF-8: {e}")))?;
        let sc = lib(Scenario::from_json(text))?;
        *out = Box::into_raw(Box::new(BsScenario(sc)));
        Ok(())
    })
}

/// # Safety
/// `sc` must come from `bs_scenario_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bs_scenario_free(sc: *mut BsScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Build the scenario's network with coupling gain `k`.
///
/// # Safety
/// `sc` must be a live scenario handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_network_from_scenario(
    sc: *const BsScenario,
    k: f64,
    out: *mut *mut BsNetwork,
) -> BsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let sc = as_ref(sc, "scenario")?;
        let net = lib(sc.0.build_network(k))?;
        *out = Box::into_raw(Box::new(BsNetwork(net)));
        Ok(())
    })
}

/// # Safety
/// `net` must come from `bs_network_from_scenario` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bs_network_free(net: *mut BsNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BsNetworkInfo {
    pub agent_count: usize,
    pub state_dim: usize,
    /// Dimension of the stacked network state.
    pub total_dim: usize,
    /// Dimension of the shared coupled subspace.
    pub shared_dim: usize,
    /// Dimension of the blended (slow) system.
    pub blended_dim: usize,
    pub gain: f64,
}

/// # Safety
/// `net` must be a live network handle and `info` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_network_info(net: *const BsNetwork, info: *mut BsNetworkInfo) -> BsStatus {
    guard(|| {
        let info = out_ptr(info, "info")?;
        let n = &as_ref(net, "network")?.0;
        *info = BsNetworkInfo {
            agent_count: n.agent_count(),
            state_dim: n.state_dim(),
            total_dim: n.total_dim(),
            shared_dim: n.decomposition().p_o,
            blended_dim: n.transform().slow_dim(),
            gain: n.gain(),
        };
        Ok(())
    })
}

/// Copy the coordinate change and its inverse, both `total_dim × total_dim`
/// row-major. Either output may be null to skip it.
///
/// # Safety
/// Non-null buffers must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_network_transform(
    net: *const BsNetwork,
    forward: *mut f64,
    inverse: *mut f64,
    capacity: usize,
) -> BsStatus {
    guard(|| {
        let t = as_ref(net, "network")?.0.transform();
        if !forward.is_null() {
            write_slice(forward, capacity, &row_major(&t.p), "forward")?;
        }
        if !inverse.is_null() {
            write_slice(inverse, capacity, &row_major(&t.p_inv), "inverse")?;
        }
        Ok(())
    })
}

/// Network right-hand side at `(t, x)`.
///
/// # Safety
/// `x` and `dx` must hold `len` doubles, with `len` the total dimension.
#[no_mangle]
pub unsafe extern "C" fn bs_network_rhs(
    net: *const BsNetwork,
    t: f64,
    x: *const f64,
    dx: *mut f64,
    len: usize,
) -> BsStatus {
    guard(|| {
        let n = &as_ref(net, "network")?.0;
        if len != n.total_dim() {
            return Err((
                BsStatus::InvalidArgument,
                format!("state has {len} entries, expected {}", n.total_dim()),
            ));
        }
        let x = DVector::from_column_slice(read_slice(x, len, "x")?);
        let r = lib(n.network_rhs(t, &x))?;
        write_slice(dx, len, r.as_slice(), "dx")
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BsSimOptions {
    pub t0: f64,
    pub t1: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum step, or the step for fixed-step integration; `<= 0` selects it
    /// automatically.
    pub max_step: f64,
    /// Nonzero for classical fixed-step Runge-Kutta.
    pub fixed_step: c_int,
}

/// Defaults: `[0, 1]`, tolerances `1e-8`/`1e-10`, adaptive stepping.
#[no_mangle]
pub extern "C" fn bs_sim_options_default() -> BsSimOptions {
    let d = SimulationOptions::default();
    BsSimOptions {
        t0: d.t0,
        t1: d.t1,
        rel_tol: d.rel_tol,
        abs_tol: d.abs_tol,
        max_step: 0.0,
        fixed_step: 0,
    }
}

fn to_options(o: &BsSimOptions) -> SimulationOptions {
    let mut opts = SimulationOptions::span(o.t0, o.t1).with_tolerances(o.rel_tol, o.abs_tol);
    if o.max_step > 0.0 {
        opts = opts.with_max_step(o.max_step);
    }
    if o.fixed_step != 0 {
        opts = opts.with_method(blendsync::simulate::Method::Rk4);
    }
    opts
}

enum Target {
    Network,
    Limiting,
}

unsafe fn simulate_impl(
    net: *const BsNetwork,
    x0: *const f64,
    len: usize,
    opts: *const BsSimOptions,
    out: *mut *mut BsTrajectory,
    target: Target,
) -> BsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let n = &as_ref(net, "network")?.0;
        let o = to_options(as_ref(opts, "options")?);
        if len != n.total_dim() {
            return Err((
                BsStatus::InvalidArgument,
                format!("initial state has {len} entries, expected {}", n.total_dim()),
            ));
        }
        let x0 = DVector::from_column_slice(read_slice(x0, len, "x0")?);
        let tr = match target {
            Target::Network => lib(simulate_network(n, &x0, &o))?,
            Target::Limiting => {
                let bs = lib(BlendedSystem::from_network(n))?;
                let b = lib(simulate_blended(&bs, &x0, &o))?;
                lib(limiting_solution(&bs, &b))?
            }
        };
        *out = Box::into_raw(Box::new(BsTrajectory(tr)));
        Ok(())
    })
}

/// Integrate the network from `x0`.
///
/// # Safety
/// `x0` must hold `len` doubles; `net`, `opts` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bs_network_simulate(
    net: *const BsNetwork,
    x0: *const f64,
    len: usize,
    opts: *const BsSimOptions,
    out: *mut *mut BsTrajectory,
) -> BsStatus {
    simulate_impl(net, x0, len, opts, out, Target::Network)
}

/// Integrate the blended system started from the projection of `x0` and
/// return the reconstructed per-agent limiting solution.
///
/// # Safety
/// Same requirements as [`bs_network_simulate`].
#[no_mangle]
pub unsafe extern "C" fn bs_network_limiting(
    net: *const BsNetwork,
    x0: *const f64,
    len: usize,
    opts: *const BsSimOptions,
    out: *mut *mut BsTrajectory,
) -> BsStatus {
    simulate_impl(net, x0, len, opts, out, Target::Limiting)
}

/// # Safety
/// `tr` must come from a simulate call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bs_trajectory_free(tr: *mut BsTrajectory) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}

/// Number of samples and state dimension.
///
/// # Safety
/// `tr` must be live; the outputs must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn bs_trajectory_shape(tr: *const BsTrajectory, samples: *mut usize, dim: *mut usize) -> BsStatus {
    guard(|| {
        let tr = &as_ref(tr, "trajectory")?.0;
        if let Some(s) = samples.as_mut() {
            *s = tr.len();
        }
        if let Some(d) = dim.as_mut() {
            *d = tr.dim();
        }
        Ok(())
    })
}

/// Copy the sample times.
///
/// # Safety
/// `buf` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_trajectory_times(tr: *const BsTrajectory, buf: *mut f64, capacity: usize) -> BsStatus {
    guard(|| {
        let tr = &as_ref(tr, "trajectory")?.0;
        write_slice(buf, capacity, tr.times(), "times")
    })
}

/// Copy the states, one row of `dim` values per sample.
///
/// # Safety
/// `buf` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_trajectory_states(tr: *const BsTrajectory, buf: *mut f64, capacity: usize) -> BsStatus {
    guard(|| {
        let tr = &as_ref(tr, "trajectory")?.0;
        let flat: Vec<f64> = (0..tr.len()).flat_map(|i| tr.state(i).iter().copied()).collect();
        write_slice(buf, capacity, &flat, "states")
    })
}

/// Run the command-line tool in-process and return its exit status.
///
/// # Safety
/// `argv` must point to `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bs_run_cli(argc: c_int, argv: *const *const c_char) -> c_int {
    let res = catch_unwind(AssertUnwindSafe(|| {
        let mut args = vec!["blendsync".to_string()];
        if argc > 0 && !argv.is_null() {
            for i in 1..argc as usize {
                let a = *argv.add(i);
                if a.is_null() {
                    break;
                }
                args.push(CStr::from_ptr(a).to_string_lossy().into_owned());
            }
        }
        blendsync::cli::main_with_args(args)
    }));
    res.unwrap_or_else(|_| {
        set_error("internal panic in the command-line driver");
        BsStatus::Panic as c_int
    })
}
