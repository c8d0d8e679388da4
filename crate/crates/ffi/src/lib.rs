//! C ABI for jkoflow.
//!
//! Simulations live behind an opaque `JkoSimulation` handle. Every function
//! returns a `JkoStatus`; on failure a message is kept per thread and can be
//! read with `jko_last_error_message`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use jkoflow::alg2::project_k;
use jkoflow::config::{parse_config, Overrides, PresetName};
use jkoflow::energy::{prox_density, Congestion, PointEnergy};
use jkoflow::output::write_snapshot;
use jkoflow::sim::{DiagnosticsRecord, Simulation};
use jkoflow::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JkoStatus {
    Ok = 0,
    InvalidArgument = 1,
    Domain = 2,
    SolverFailure = 3,
    State = 4,
    Config = 5,
    Io = 6,
    NullPointer = 7,
    Panic = 8,
}

/// Congestion mode of [`JkoPointEnergy`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JkoCongestion {
    /// `α·ρ <= 1`; the exponent is ignored.
    Hard = 0,
    /// `(α·ρ)^m / (m - 1)`, or `z log z` for `m = 1`.
    Porous = 1,
}

/// Pointwise energy parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct JkoPointEnergy {
    pub v1: f64,
    pub v2: f64,
    pub eps: f64,
    pub congestion: JkoCongestion,
    pub m: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Per-step diagnostics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct JkoDiagnostics {
    pub step: usize,
    pub time: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub energy: f64,
    pub dynamic_cost: f64,
    pub max_violation: f64,
    pub complementarity: f64,
    pub pressure_l1: f64,
    pub sup_sum: f64,
    pub fisher1: f64,
    pub fisher2: f64,
    pub congestion_dissipation: f64,
    pub converged: bool,
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
}

impl From<&DiagnosticsRecord> for JkoDiagnostics {
    fn from(r: &DiagnosticsRecord) -> Self {
        JkoDiagnostics {
            step: r.step,
            time: r.time,
            mass1: r.mass1,
            mass2: r.mass2,
            energy: r.energy,
            dynamic_cost: r.dynamic_cost,
            max_violation: r.max_violation,
            complementarity: r.complementarity,
            pressure_l1: r.pressure_l1,
            sup_sum: r.sup_sum,
            fisher1: r.fisher[0],
            fisher2: r.fisher[1],
            congestion_dissipation: r.congestion_dissipation,
            converged: r.converged,
            iterations: r.iterations,
            primal: r.primal,
            dual: r.dual,
        }
    }
}

/// Opaque simulation handle.
pub struct JkoSimulation {
    sim: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> JkoStatus {
    match e {
        Error::InvalidArgument(_) => JkoStatus::InvalidArgument,
        Error::Domain(_) => JkoStatus::Domain,
        Error::SolverFailure { .. } => JkoStatus::SolverFailure,
        Error::State(_) => JkoStatus::State,
        Error::Config { .. } => JkoStatus::Config,
        Error::Io { .. } => JkoStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> JkoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            JkoStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is a null pointer"));
            JkoStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            JkoStatus::InvalidArgument
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            JkoStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a>(p: *const JkoSimulation) -> Result<&'a JkoSimulation, Failure> {
    p.as_ref().ok_or(Failure::Null("simulation"))
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn jko_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a simulation from a named preset. Nonzero `nx` and `ny` override
/// the preset grid.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_from_preset(
    name: *const c_char,
    nx: usize,
    ny: usize,
    out: *mut *mut JkoSimulation,
) -> JkoStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let preset: PresetName = str_arg(name, "name")?.parse()?;
        let flags = Overrides {
            nx: (nx > 0).then_some(nx),
            ny: (ny > 0).then_some(ny),
            ..Overrides::default()
        };
        let run = parse_config(Some(preset), None, &flags)?;
        let sim = Simulation::new(&run.sim)?;
        *out = Box::into_raw(Box::new(JkoSimulation { sim }));
        Ok(())
    })
}

/// Creates a simulation from a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_from_config(path: *const c_char, out: *mut *mut JkoSimulation) -> JkoStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let path = str_arg(path, "path")?;
        let run = parse_config(None, Some(Path::new(path)), &Overrides::default())?;
        let sim = Simulation::new(&run.sim)?;
        *out = Box::into_raw(Box::new(JkoSimulation { sim }));
        Ok(())
    })
}

/// Releases a simulation. NULL is ignored.
///
/// # Safety
/// `sim` must come from a constructor of this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_free(sim: *mut JkoSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Grid size of the simulation.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_grid(sim: *const JkoSimulation, nx: *mut usize, ny: *mut usize) -> JkoStatus {
    guard(|| {
        let s = handle(sim)?;
        if nx.is_null() || ny.is_null() {
            return Err(Failure::Null("nx/ny"));
        }
        let g = s.sim.rho.rho1.grid;
        *nx = g.nx;
        *ny = g.ny;
        Ok(())
    })
}

/// Steps taken so far and the current time.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_time(sim: *const JkoSimulation, step: *mut usize, time: *mut f64) -> JkoStatus {
    guard(|| {
        let s = handle(sim)?;
        if step.is_null() || time.is_null() {
            return Err(Failure::Null("step/time"));
        }
        *step = s.sim.step;
        *time = s.sim.time();
        Ok(())
    })
}

/// Diagnostics of the initial data.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_initial_diagnostics(
    sim: *const JkoSimulation,
    out: *mut JkoDiagnostics,
) -> JkoStatus {
    guard(|| {
        let s = handle(sim)?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = (&s.sim.initial_diagnostics()).into();
        Ok(())
    })
}

/// Takes one JKO step. `out` may be NULL.
///
/// # Safety
/// `sim` must be a valid handle; `out` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_advance(sim: *mut JkoSimulation, out: *mut JkoDiagnostics) -> JkoStatus {
    guard(|| {
        let s = sim.as_mut().ok_or(Failure::Null("simulation"))?;
        let rec = s.sim.advance()?;
        if let Some(out) = out.as_mut() {
            *out = (&rec).into();
        }
        Ok(())
    })
}

fn copy_field(values: &[f64], buf: *mut f64, len: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(Failure::Null("buffer"));
    }
    if len != values.len() {
        return Err(Failure::Arg(format!("buffer holds {len} values, the grid has {}", values.len())));
    }
    unsafe { ptr::copy_nonoverlapping(values.as_ptr(), buf, len) };
    Ok(())
}

/// Copies the density of `species` (1 or 2) into `buf`, row-major with `x`
/// fastest. `len` must equal `nx * ny`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_density(
    sim: *const JkoSimulation,
    species: u32,
    buf: *mut f64,
    len: usize,
) -> JkoStatus {
    guard(|| {
        let s = handle(sim)?;
        let f = match species {
            1 => &s.sim.rho.rho1,
            2 => &s.sim.rho.rho2,
            _ => return Err(Failure::Arg(format!("species {species} is not 1 or 2"))),
        };
        copy_field(&f.values, buf, len)
    })
}

/// Copies the pressure into `buf` (same layout as densities).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_pressure(sim: *const JkoSimulation, buf: *mut f64, len: usize) -> JkoStatus {
    guard(|| copy_field(&handle(sim)?.sim.pressure.values, buf, len))
}

/// Writes the current snapshot (CSV and heatmaps) into `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn jko_simulation_write_snapshot(
    sim: *const JkoSimulation,
    dir: *const c_char,
    vmax: f64,
) -> JkoStatus {
    guard(|| {
        let s = handle(sim)?;
        let dir = str_arg(dir, "dir")?;
        if !(vmax > 0.0 && vmax.is_finite()) {
            return Err(Failure::Arg(format!("vmax {vmax} must be positive")));
        }
        write_snapshot(&s.sim.snapshot(), Path::new(dir), vmax)?;
        Ok(())
    })
}

fn point_energy(p: &JkoPointEnergy) -> PointEnergy {
    PointEnergy {
        v: [p.v1, p.v2],
        eps: p.eps,
        congestion: match p.congestion {
            JkoCongestion::Hard => Congestion::Hard,
            JkoCongestion::Porous => Congestion::PorousMedium { m: p.m },
        },
        alpha: [p.alpha1, p.alpha2],
    }
}

/// Pointwise proximal map: minimizes `e(ρ) + |ρ - s|²/2λ` and writes the
/// minimizer to `rho[0..2]` and the pressure to `pressure` (may be NULL).
///
/// # Safety
/// `energy` must be valid and `rho` hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn jko_prox_density(
    s1: f64,
    s2: f64,
    lambda: f64,
    energy: *const JkoPointEnergy,
    rho: *mut f64,
    pressure: *mut f64,
) -> JkoStatus {
    guard(|| {
        let pt = point_energy(energy.as_ref().ok_or(Failure::Null("energy"))?);
        if rho.is_null() {
            return Err(Failure::Null("rho"));
        }
        if let Congestion::PorousMedium { m } = pt.congestion {
            if !(m >= 1.0 && m.is_finite()) {
                return Err(Failure::Arg(format!("exponent {m} must be at least 1")));
            }
        }
        let r = prox_density([s1, s2], lambda, &pt)?;
        *rho = r.rho[0];
        *rho.add(1) = r.rho[1];
        if let Some(p) = pressure.as_mut() {
            *p = r.pressure;
        }
        Ok(())
    })
}

/// Projection of `(a, b1, b2)` onto `{a + ½|b|² <= 0}`, written to `out[0..3]`.
///
/// # Safety
/// `out` must hold three doubles.
#[no_mangle]
pub unsafe extern "C" fn jko_project_k(a: f64, b1: f64, b2: f64, out: *mut f64) -> JkoStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if !(a.is_finite() && b1.is_finite() && b2.is_finite()) {
            return Err(Failure::Arg("inputs must be finite".into()));
        }
        let (pa, pb) = project_k(a, [b1, b2]);
        *out = pa;
        *out.add(1) = pb[0];
        *out.add(2) = pb[1];
        Ok(())
    })
}
