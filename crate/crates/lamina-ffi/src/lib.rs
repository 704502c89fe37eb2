//! C ABI for the lamina solver suite.
//!
//! Handles are opaque; every fallible call returns a [`LaminaStatus`] and
//! leaves a human-readable message retrievable through
//! [`lamina_last_error`]. All pointers returned by constructors must be
//! released with the matching `_free` function.

use lamina::exact::Exact;
use lamina::harness::{presets, run_common_atom_demo, run_convergence, RawConfig};
use lamina::measures::{Atom, Measure1D};
use lamina::oracle::{constant_source, solve_limit_1d};
use lamina::tensors::heat_effective;
use nalgebra::DMatrix;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaminaStatus {
    LaminaOk = 0,
    LaminaErrConfig = 1,
    LaminaErrSolver = 2,
    LaminaErrInvalidArg = 3,
    LaminaErrIo = 4,
    LaminaErrPanic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).unwrap_or_default();
    });
}

fn guard<T>(body: impl FnOnce() -> Result<T, (LaminaStatus, String)>) -> Result<T, LaminaStatus> {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(value)) => Ok(value),
        Ok(Err((status, msg))) => {
            set_error(&msg);
            Err(status)
        }
        Err(_) => {
            set_error("internal panic");
            Err(LaminaStatus::LaminaErrPanic)
        }
    }
}

/// Opaque validated experiment.
pub struct LaminaExperiment {
    inner: lamina::harness::Experiment,
}

/// Opaque convergence report.
pub struct LaminaReport {
    inner: lamina::harness::ConvergenceReport,
}

/// Opaque common-atom demo report.
pub struct LaminaDemoReport {
    inner: lamina::harness::DemoReport,
}

/// Library version string (static storage, do not free).
#[no_mangle]
pub extern "C" fn lamina_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last error on this thread (valid until the next call).
#[no_mangle]
pub extern "C" fn lamina_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, (LaminaStatus, String)> {
    if ptr.is_null() {
        return Err((LaminaStatus::LaminaErrInvalidArg, "null string".into()));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| (LaminaStatus::LaminaErrInvalidArg, "invalid utf-8".into()))
}

fn validate(raw: RawConfig, out: *mut *mut LaminaExperiment) -> Result<(), (LaminaStatus, String)> {
    let exp = raw
        .validate()
        .map_err(|e| (LaminaStatus::LaminaErrConfig, e.to_string()))?;
    let boxed = Box::new(LaminaExperiment { inner: exp });
    unsafe { *out = Box::into_raw(boxed) };
    Ok(())
}

/// Parse and validate an experiment config from a TOML file.
///
/// # Safety
/// `path` must be a valid C string; `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn lamina_experiment_from_file(
    path: *const c_char,
    out: *mut *mut LaminaExperiment,
) -> LaminaStatus {
    if out.is_null() {
        set_error("null out pointer");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    match guard(|| {
        let path = read_str(path)?;
        let raw = RawConfig::from_path(std::path::Path::new(path))
            .map_err(|e| (LaminaStatus::LaminaErrIo, e.to_string()))?;
        validate(raw, out)
    }) {
        Ok(()) => LaminaStatus::LaminaOk,
        Err(status) => status,
    }
}

/// Parse and validate an experiment config from a TOML string.
///
/// # Safety
/// `text` must be a valid C string; `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn lamina_experiment_from_str(
    text: *const c_char,
    out: *mut *mut LaminaExperiment,
) -> LaminaStatus {
    if out.is_null() {
        set_error("null out pointer");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    match guard(|| {
        let text = read_str(text)?;
        let raw = RawConfig::from_str(text)
            .map_err(|e| (LaminaStatus::LaminaErrConfig, e.to_string()))?;
        validate(raw, out)
    }) {
        Ok(()) => LaminaStatus::LaminaOk,
        Err(status) => status,
    }
}

/// Load a built-in preset (E1, E2, E3, E4).
///
/// # Safety
/// `name` must be a valid C string; `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn lamina_experiment_preset(
    name: *const c_char,
    out: *mut *mut LaminaExperiment,
) -> LaminaStatus {
    if out.is_null() {
        set_error("null out pointer");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    match guard(|| {
        let name = read_str(name)?;
        let raw = presets::preset(name).ok_or_else(|| {
            (
                LaminaStatus::LaminaErrConfig,
                format!("unknown preset {name:?}"),
            )
        })?;
        validate(raw, out)
    }) {
        Ok(()) => LaminaStatus::LaminaOk,
        Err(status) => status,
    }
}

/// # Safety
/// `exp` must come from a lamina constructor (or be null).
#[no_mangle]
pub unsafe extern "C" fn lamina_experiment_free(exp: *mut LaminaExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Run the convergence sweep of a validated experiment.
///
/// # Safety
/// `exp` must be a live experiment handle; `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn lamina_run_convergence(
    exp: *const LaminaExperiment,
    out: *mut *mut LaminaReport,
) -> LaminaStatus {
    if exp.is_null() || out.is_null() {
        set_error("null handle");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    match guard(|| {
        let exp = &(*exp).inner;
        let report = run_convergence(exp).map_err(|e| {
            let status = match e.exit_code() {
                2 => LaminaStatus::LaminaErrSolver,
                _ => LaminaStatus::LaminaErrConfig,
            };
            (status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(LaminaReport { inner: report }));
        Ok(())
    }) {
        Ok(()) => LaminaStatus::LaminaOk,
        Err(status) => status,
    }
}

/// # Safety
/// `report` must come from `lamina_run_convergence` (or be null).
#[no_mangle]
pub unsafe extern "C" fn lamina_report_free(report: *mut LaminaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of sweep rows in a report.
///
/// # Safety
/// `report` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn lamina_report_rows(report: *const LaminaReport) -> usize {
    if report.is_null() {
        return 0;
    }
    (*report).inner.rows.len()
}

/// Read one row. Any output pointer may be null to skip that column.
/// Returns `LaminaErrInvalidArg` when the row index is out of range.
///
/// # Safety
/// `report` must be a live report handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn lamina_report_row(
    report: *const LaminaReport,
    row: usize,
    eps: *mut f64,
    h: *mut f64,
    l1_error: *mut f64,
    l2_error: *mut f64,
    energy_fine: *mut f64,
    energy_eff: *mut f64,
    iterations: *mut usize,
) -> LaminaStatus {
    if report.is_null() {
        set_error("null handle");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    let rows = &(*report).inner.rows;
    let Some(r) = rows.get(row) else {
        set_error("row out of range");
        return LaminaStatus::LaminaErrInvalidArg;
    };
    let write = |ptr: *mut f64, v: f64| {
        if !ptr.is_null() {
            *ptr = v;
        }
    };
    write(eps, r.eps);
    write(h, r.h);
    write(l1_error, r.l1_error);
    write(l2_error, r.l2_error);
    write(energy_fine, r.energy_fine);
    write(energy_eff, r.energy_eff);
    if !iterations.is_null() {
        *iterations = r.iterations;
    }
    LaminaStatus::LaminaOk
}

/// Write the report as CSV (same schema as the CLI emits).
///
/// # Safety
/// `report` must be a live report handle; `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn lamina_report_write_csv(
    report: *const LaminaReport,
    path: *const c_char,
) -> LaminaStatus {
    if report.is_null() {
        set_error("null handle");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    match guard(|| {
        let path = read_str(path)?;
        std::fs::write(path, (*report).inner.to_csv())
            .map_err(|e| (LaminaStatus::LaminaErrIo, e.to_string()))
    }) {
        Ok(()) => LaminaStatus::LaminaOk,
        Err(status) => status,
    }
}

/// Run the common-atom demo of a validated experiment.
///
/// # Safety
/// `exp` must be a live experiment handle; `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn lamina_run_common_atom_demo(
    exp: *const LaminaExperiment,
    out: *mut *mut LaminaDemoReport,
) -> LaminaStatus {
    if exp.is_null() || out.is_null() {
        set_error("null handle");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    match guard(|| {
        let exp = &(*exp).inner;
        let report = run_common_atom_demo(exp).map_err(|e| {
            let status = match e.exit_code() {
                2 => LaminaStatus::LaminaErrSolver,
                _ => LaminaStatus::LaminaErrConfig,
            };
            (status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(LaminaDemoReport { inner: report }));
        Ok(())
    }) {
        Ok(()) => LaminaStatus::LaminaOk,
        Err(status) => status,
    }
}

/// # Safety
/// `report` must come from `lamina_run_common_atom_demo` (or be null).
#[no_mangle]
pub unsafe extern "C" fn lamina_demo_report_free(report: *mut LaminaDemoReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of demo rows.
///
/// # Safety
/// `report` must be a live demo-report handle.
#[no_mangle]
pub unsafe extern "C" fn lamina_demo_rows(report: *const LaminaDemoReport) -> usize {
    if report.is_null() {
        return 0;
    }
    (*report).inner.rows.len()
}

/// Read one demo row (any output pointer may be null).
///
/// # Safety
/// `report` must be a live demo-report handle; non-null outputs valid.
#[no_mangle]
pub unsafe extern "C" fn lamina_demo_row(
    report: *const LaminaDemoReport,
    row: usize,
    eps: *mut f64,
    distance: *mut f64,
    cauchy_a: *mut f64,
    cauchy_b: *mut f64,
) -> LaminaStatus {
    if report.is_null() {
        set_error("null handle");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    let rows = &(*report).inner.rows;
    let Some(r) = rows.get(row) else {
        set_error("row out of range");
        return LaminaStatus::LaminaErrInvalidArg;
    };
    let write = |ptr: *mut f64, v: f64| {
        if !ptr.is_null() {
            *ptr = v;
        }
    };
    write(eps, r.eps);
    write(distance, r.distance);
    write(cauchy_a, r.cauchy_a);
    write(cauchy_b, r.cauchy_b);
    LaminaStatus::LaminaOk
}

/// Effective tensors of the heat law: `a` is the row-major `d x d`
/// conductivity; `a_perp` and `a_par` receive `d x d` row-major outputs and
/// `iface` the scalar spring coefficient `A_11`.
///
/// # Safety
/// `a`, `a_perp`, `a_par` must point to `d*d` doubles; `iface` to one.
#[no_mangle]
pub unsafe extern "C" fn lamina_heat_effective(
    a: *const f64,
    d: usize,
    a_perp: *mut f64,
    a_par: *mut f64,
    iface: *mut f64,
) -> LaminaStatus {
    if a.is_null() || a_perp.is_null() || a_par.is_null() || iface.is_null() || d == 0 {
        set_error("null pointer or zero dimension");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    match guard(|| {
        let slice = std::slice::from_raw_parts(a, d * d);
        let matrix = DMatrix::from_fn(d, d, |i, j| slice[i * d + j]);
        let eff = heat_effective(&matrix)
            .map_err(|e| (LaminaStatus::LaminaErrInvalidArg, e.to_string()))?;
        for j in 0..d {
            for q in 0..d {
                *a_perp.add(j * d + q) = eff.a_perp.get(0, j, 0, q);
                *a_par.add(j * d + q) = eff.a_par.get(0, j, 0, q);
            }
        }
        *iface = eff.iface[(0, 0)];
        Ok(())
    }) {
        Ok(()) => LaminaStatus::LaminaOk,
        Err(status) => status,
    }
}

/// Closed-form 1-D limit solution for a measure with piecewise-constant
/// density and atoms, constant source `f`. Samples the solution at
/// `n_samples` points and returns the flux constant through `sigma0`.
///
/// # Safety
/// Array arguments must match the advertised lengths; output buffers must
/// be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lamina_solve_limit_1d(
    length: f64,
    density_breaks: *const f64,
    densities: *const f64,
    n_pieces: usize,
    atom_locations: *const f64,
    atom_masses: *const f64,
    n_atoms: usize,
    f_value: f64,
    sample_points: *const f64,
    samples_out: *mut f64,
    n_samples: usize,
    sigma0_out: *mut f64,
) -> LaminaStatus {
    if density_breaks.is_null() || densities.is_null() || n_pieces == 0 {
        set_error("null density data");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    if n_samples > 0 && (sample_points.is_null() || samples_out.is_null()) {
        set_error("null sample buffers");
        return LaminaStatus::LaminaErrInvalidArg;
    }
    match guard(|| {
        let breaks = std::slice::from_raw_parts(density_breaks, n_pieces + 1).to_vec();
        let dens = std::slice::from_raw_parts(densities, n_pieces).to_vec();
        let mut atoms = Vec::with_capacity(n_atoms);
        if n_atoms > 0 {
            if atom_locations.is_null() || atom_masses.is_null() {
                return Err((LaminaStatus::LaminaErrInvalidArg, "null atom data".into()));
            }
            let locs = std::slice::from_raw_parts(atom_locations, n_atoms);
            let masses = std::slice::from_raw_parts(atom_masses, n_atoms);
            for (loc, mass) in locs.iter().zip(masses) {
                atoms.push(Atom {
                    location: Exact::from_f64(*loc)
                        .map_err(|e| (LaminaStatus::LaminaErrInvalidArg, e.to_string()))?,
                    mass: *mass,
                });
            }
            atoms.sort_by_key(|a| a.location);
        }
        let nu = Measure1D::new(length, breaks, dens, atoms)
            .map_err(|e| (LaminaStatus::LaminaErrInvalidArg, e.to_string()))?;
        let f = constant_source(length, f_value);
        let sol = solve_limit_1d(&nu, &f)
            .map_err(|e| (LaminaStatus::LaminaErrInvalidArg, e.to_string()))?;
        if n_samples > 0 {
            let points = std::slice::from_raw_parts(sample_points, n_samples);
            for (k, x) in points.iter().enumerate() {
                if !(0.0..=length).contains(x) {
                    return Err((
                        LaminaStatus::LaminaErrInvalidArg,
                        format!("sample point {x} outside [0, {length}]"),
                    ));
                }
                *samples_out.add(k) = sol.eval(*x);
            }
        }
        if !sigma0_out.is_null() {
            *sigma0_out = sol.sigma0();
        }
        Ok(())
    }) {
        Ok(()) => LaminaStatus::LaminaOk,
        Err(status) => status,
    }
}

/// Run the acceptance suite; returns the number of failed criteria
/// (0 means all pass) and prints one line per criterion to stdout.
#[no_mangle]
pub extern "C" fn lamina_verify() -> usize {
    match catch_unwind(lamina::harness::verify::run_all_criteria) {
        Ok(results) => {
            let mut failures = 0;
            for r in &results {
                println!("{}", r.line());
                if !r.pass {
                    failures += 1;
                }
            }
            failures
        }
        Err(_) => {
            set_error("internal panic");
            usize::MAX
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_and_error_strings() {
        let v = unsafe { CStr::from_ptr(lamina_version()) };
        assert!(!v.to_str().unwrap().is_empty());
        let e = unsafe { CStr::from_ptr(lamina_last_error()) };
        assert_eq!(e.to_str().unwrap(), "");
    }

    #[test]
    fn preset_roundtrip_through_ffi() {
        let name = CString::new("E1").unwrap();
        let mut exp: *mut LaminaExperiment = std::ptr::null_mut();
        let status = unsafe { lamina_experiment_preset(name.as_ptr(), &mut exp) };
        assert_eq!(status, LaminaStatus::LaminaOk);

        let mut report: *mut LaminaReport = std::ptr::null_mut();
        let status = unsafe { lamina_run_convergence(exp, &mut report) };
        assert_eq!(status, LaminaStatus::LaminaOk);
        let rows = unsafe { lamina_report_rows(report) };
        assert_eq!(rows, 7);
        let mut eps = 0.0;
        let mut l1 = 0.0;
        let status = unsafe {
            lamina_report_row(
                report,
                rows - 1,
                &mut eps,
                std::ptr::null_mut(),
                &mut l1,
                std::ptr::null_mut(),
                std::ptr::null_mut(),
                std::ptr::null_mut(),
                std::ptr::null_mut(),
            )
        };
        assert_eq!(status, LaminaStatus::LaminaOk);
        assert_eq!(eps, 1e-4);
        assert!(l1 < 1e-3);
        unsafe {
            lamina_report_free(report);
            lamina_experiment_free(exp);
        }
    }

    #[test]
    fn bad_preset_reports_error() {
        let name = CString::new("E9").unwrap();
        let mut exp: *mut LaminaExperiment = std::ptr::null_mut();
        let status = unsafe { lamina_experiment_preset(name.as_ptr(), &mut exp) };
        assert_eq!(status, LaminaStatus::LaminaErrConfig);
        let msg = unsafe { CStr::from_ptr(lamina_last_error()) };
        assert!(msg.to_str().unwrap().contains("E9"));
    }

    #[test]
    fn heat_effective_through_ffi() {
        let a = [2.0, 1.0, 1.0, 2.0];
        let mut perp = [0.0; 4];
        let mut par = [0.0; 4];
        let mut iface = 0.0;
        let status = unsafe {
            lamina_heat_effective(a.as_ptr(), 2, perp.as_mut_ptr(), par.as_mut_ptr(), &mut iface)
        };
        assert_eq!(status, LaminaStatus::LaminaOk);
        assert_eq!(perp, [2.0, 1.0, 1.0, 0.5]);
        assert_eq!(par, [0.0, 0.0, 0.0, 1.5]);
        assert_eq!(iface, 2.0);
    }

    #[test]
    fn limit_oracle_through_ffi() {
        let breaks = [0.0, 1.0];
        let densities = [1.0];
        let atoms_loc = [1.0 / 4.0];
        let atoms_mass = [1.0];
        let samples_x = [0.125, 0.75];
        let mut samples = [0.0; 2];
        let mut sigma0 = 0.0;
        let status = unsafe {
            lamina_solve_limit_1d(
                1.0,
                breaks.as_ptr(),
                densities.as_ptr(),
                1,
                atoms_loc.as_ptr(),
                atoms_mass.as_ptr(),
                1,
                1.0,
                samples_x.as_ptr(),
                samples.as_mut_ptr(),
                2,
                &mut sigma0,
            )
        };
        assert_eq!(status, LaminaStatus::LaminaOk);
        // sigma0 = (1/2 + 1/4) / 2 = 3/8
        assert!((sigma0 - 0.375).abs() < 1e-14);
        assert!((samples[0] - (0.375 * 0.125 - 0.125 * 0.125 / 2.0)).abs() < 1e-14);
    }

    #[test]
    fn demo_through_ffi() {
        let name = CString::new("E4").unwrap();
        let mut exp: *mut LaminaExperiment = std::ptr::null_mut();
        unsafe { lamina_experiment_preset(name.as_ptr(), &mut exp) };
        let mut report: *mut LaminaDemoReport = std::ptr::null_mut();
        let status = unsafe { lamina_run_common_atom_demo(exp, &mut report) };
        assert_eq!(status, LaminaStatus::LaminaOk);
        let rows = unsafe { lamina_demo_rows(report) };
        let mut distance = 0.0;
        unsafe {
            lamina_demo_row(
                report,
                rows - 1,
                std::ptr::null_mut(),
                &mut distance,
                std::ptr::null_mut(),
                std::ptr::null_mut(),
            );
            lamina_demo_report_free(report);
            lamina_experiment_free(exp);
        }
        assert!(distance > 0.01);
    }

    #[test]
    fn header_is_generated() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("include")
            .join("lamina.h");
        let text = std::fs::read_to_string(header).expect("cbindgen header exists");
        assert!(text.contains("lamina_run_convergence"));
        assert!(text.contains("LaminaStatus"));
    }
}
