//! C ABI over the `fedsim` simulator.
//!
//! Objects cross the boundary as opaque handles that must be released with
//! the matching `*_free` function. Every fallible call returns a
//! [`FedsimStatus`]; the message of the last failure on the calling thread is
//! available through [`fedsim_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use fedsim::harness::{emit_csv, RunConfigFile};
use fedsim::{FedError, NormalizerRule, Problem, RunLog, SamplingScheme, Vector};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FedsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Divergence = 5,
    Internal = 6,
}

/// Aggregation normalizer selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FedsimNormalizer {
    Unbiased = 0,
    SumOne = 1,
    FedAvg = 2,
}

/// Opaque problem handle.
pub struct FedsimProblem(Problem);

/// Opaque sampling-scheme handle.
pub struct FedsimScheme(SamplingScheme);

/// Opaque handle holding the logs of a configuration run, one per seed.
pub struct FedsimRun(Vec<RunLog>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FedsimStatus, msg: impl Into<String>) -> FedsimStatus {
    set_error(msg.into());
    status
}

fn from_error(e: FedError) -> FedsimStatus {
    let status = match &e {
        FedError::Argument(_) | FedError::Unsupported(_) => FedsimStatus::InvalidArgument,
        FedError::Config(_) => FedsimStatus::Config,
        FedError::Io { .. } => FedsimStatus::Io,
        FedError::Divergence { .. } => FedsimStatus::Divergence,
        _ => FedsimStatus::Internal,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), FedsimStatus>) -> FedsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FedsimStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(FedsimStatus::Internal, "panic inside fedsim"),
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize) -> Result<&'a [T], FedsimStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(FedsimStatus::NullPointer, "null input array"));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], FedsimStatus> {
    if p.is_null() {
        return Err(fail(FedsimStatus::NullPointer, "null output buffer"));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, FedsimStatus> {
    p.as_ref().ok_or_else(|| fail(FedsimStatus::NullPointer, "null handle"))
}

unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, FedsimStatus> {
    if p.is_null() {
        return Err(fail(FedsimStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FedsimStatus::InvalidArgument, "string is not valid UTF-8"))
}

fn publish<T>(out: *mut *mut T, value: T) -> Result<(), FedsimStatus> {
    if out.is_null() {
        return Err(fail(FedsimStatus::NullPointer, "null output handle"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message of the last error on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn fedsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Problem whose client `i` holds `sizes[i]` copies of the row-major anchor
/// `anchors[i*dim..(i+1)*dim]`, with weights proportional to size.
///
/// # Safety
/// `anchors` must point to `n*dim` doubles, `sizes` to `n` values.
#[no_mangle]
pub unsafe extern "C" fn fedsim_problem_duplicated_quadratic(
    anchors: *const f64,
    sizes: *const usize,
    n: usize,
    dim: usize,
    out: *mut *mut FedsimProblem,
) -> FedsimStatus {
    guard(|| {
        let a = input(anchors, n * dim)?;
        let s = input(sizes, n)?;
        let rows = a.chunks(dim.max(1)).take(n).map(Vector::from_row_slice).collect();
        let p = Problem::duplicated_quadratic(rows, s.to_vec()).map_err(from_error)?;
        publish(out, FedsimProblem(p))
    })
}

/// Logistic-regression problem with synthetic data.
///
/// # Safety
/// `sizes` must point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn fedsim_problem_logistic(
    sizes: *const usize,
    n: usize,
    dim: usize,
    ridge: f64,
    seed: u64,
    out: *mut *mut FedsimProblem,
) -> FedsimStatus {
    guard(|| {
        let s = input(sizes, n)?;
        let p = Problem::logistic(s, dim, ridge, seed).map_err(from_error)?;
        publish(out, FedsimProblem(p))
    })
}

/// # Safety
/// `problem` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fedsim_problem_free(problem: *mut FedsimProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedsim_problem_dim(problem: *const FedsimProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.dim())
}

/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedsim_problem_n_clients(problem: *const FedsimProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.n_clients())
}

/// Copies the objective weights into `out[0..n]`.
///
/// # Safety
/// `out` must have room for `n_clients` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_problem_weights(problem: *const FedsimProblem, out: *mut f64) -> FedsimStatus {
    guard(|| {
        let p = &handle(problem)?.0;
        output(out, p.n_clients())?.copy_from_slice(p.weights());
        Ok(())
    })
}

/// Full objective value and gradient at `x`; `grad` may be null.
///
/// # Safety
/// `x` and `grad` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_problem_evaluate(
    problem: *const FedsimProblem,
    x: *const f64,
    value: *mut f64,
    grad: *mut f64,
) -> FedsimStatus {
    guard(|| {
        let p = &handle(problem)?.0;
        let x = Vector::from_row_slice(input(x, p.dim())?);
        let v = p.full_value(&x).map_err(from_error)?;
        output(value, 1)?[0] = v;
        if !grad.is_null() {
            let g = p.full_gradient(&x).map_err(from_error)?;
            output(grad, p.dim())?.copy_from_slice(g.as_slice());
        }
        Ok(())
    })
}

/// Full participation of `n` clients.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fedsim_scheme_full(n: usize, out: *mut *mut FedsimScheme) -> FedsimStatus {
    guard(|| publish(out, FedsimScheme(SamplingScheme::full(n).map_err(from_error)?)))
}

/// Uniform sampling of `b` of `n` clients without replacement.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fedsim_scheme_uniform(n: usize, b: usize, out: *mut *mut FedsimScheme) -> FedsimStatus {
    guard(|| publish(out, FedsimScheme(SamplingScheme::uniform(n, b).map_err(from_error)?)))
}

/// Each client participates independently with probability `p[i]`.
///
/// # Safety
/// `p` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_scheme_independent(
    p: *const f64,
    n: usize,
    out: *mut *mut FedsimScheme,
) -> FedsimStatus {
    guard(|| {
        let p = input(p, n)?.to_vec();
        publish(out, FedsimScheme(SamplingScheme::independent(p).map_err(from_error)?))
    })
}

/// Exactly one client per round, client `i` with probability `pi[i]`.
///
/// # Safety
/// `pi` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_scheme_one_client(
    pi: *const f64,
    n: usize,
    out: *mut *mut FedsimScheme,
) -> FedsimStatus {
    guard(|| {
        let pi = input(pi, n)?.to_vec();
        publish(out, FedsimScheme(SamplingScheme::one_client(pi).map_err(from_error)?))
    })
}

/// # Safety
/// `scheme` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fedsim_scheme_free(scheme: *mut FedsimScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

/// Inclusion probabilities `p_i` into `out[0..n]`.
///
/// # Safety
/// `out` must have room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_scheme_probabilities(scheme: *const FedsimScheme, out: *mut f64) -> FedsimStatus {
    guard(|| {
        let s = &handle(scheme)?.0;
        output(out, s.n())?.copy_from_slice(s.probabilities());
        Ok(())
    })
}

/// Constant `M = max_i s_i w_i / p_i` of the scheme for weights `w`.
///
/// # Safety
/// `w` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_scheme_m_constant(
    scheme: *const FedsimScheme,
    w: *const f64,
    out: *mut f64,
) -> FedsimStatus {
    guard(|| {
        let s = &handle(scheme)?.0;
        let w = input(w, s.n())?;
        output(out, 1)?[0] = s.m_constant(w);
        Ok(())
    })
}

fn rule(kind: FedsimNormalizer, scheme: &SamplingScheme) -> NormalizerRule {
    match kind {
        FedsimNormalizer::Unbiased => NormalizerRule::Unbiased,
        FedsimNormalizer::SumOne => NormalizerRule::sum_one(),
        FedsimNormalizer::FedAvg => NormalizerRule::fedavg(scheme),
    }
}

/// Expected aggregation coefficient `w_i / q_i` of every client.
///
/// # Safety
/// `w` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_expected_contribution(
    scheme: *const FedsimScheme,
    normalizer: FedsimNormalizer,
    w: *const f64,
    out: *mut f64,
) -> FedsimStatus {
    guard(|| {
        let s = &handle(scheme)?.0;
        let w = input(w, s.n())?;
        let got = fedsim::sampling::expected_contribution(s, &rule(normalizer, s), w).map_err(from_error)?;
        output(out, s.n())?.copy_from_slice(&got);
        Ok(())
    })
}

/// Normalized effective weights `ŵ` of a parametrization.
///
/// # Safety
/// All arrays must hold `n` doubles, where `n` is the scheme size.
#[no_mangle]
pub unsafe extern "C" fn fedsim_effective_weights(
    scheme: *const FedsimScheme,
    normalizer: FedsimNormalizer,
    agg_weights: *const f64,
    step_normalizers: *const f64,
    local_steps: *const f64,
    w: *const f64,
    out: *mut f64,
) -> FedsimStatus {
    guard(|| {
        let s = &handle(scheme)?.0;
        let n = s.n();
        let eff = fedsim::aggregation::effective_weights(
            input(agg_weights, n)?,
            input(step_normalizers, n)?,
            input(local_steps, n)?,
            &rule(normalizer, s),
            s,
            input(w, n)?,
        )
        .map_err(from_error)?;
        output(out, n)?.copy_from_slice(&eff.w_hat);
        Ok(())
    })
}

/// Runs a JSON run configuration, one log per configured seed. A nonzero
/// `use_seed` replaces the configured seeds with `seed`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_json(
    config_json: *const c_char,
    use_seed: bool,
    seed: u64,
    out: *mut *mut FedsimRun,
) -> FedsimStatus {
    guard(|| {
        let text = string(config_json)?;
        let prepared = RunConfigFile::from_json(text)
            .and_then(|c| c.prepare(use_seed.then_some(seed)))
            .map_err(from_error)?;
        let logs = prepared
            .configs
            .iter()
            .map(|c| fedsim::run(c, &prepared.problem))
            .collect::<Result<Vec<_>, _>>()
            .map_err(from_error)?;
        publish(out, FedsimRun(logs))
    })
}

/// # Safety
/// `run` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_free(run: *mut FedsimRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of logs (seeds) held by the run.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_count(run: *const FedsimRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.len())
}

unsafe fn log_at<'a>(run: *const FedsimRun, index: usize) -> Result<&'a RunLog, FedsimStatus> {
    handle(run)?
        .0
        .get(index)
        .ok_or_else(|| fail(FedsimStatus::InvalidArgument, format!("log index {index} out of range")))
}

/// Number of recorded rounds of log `index`, or 0 for a bad handle.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_rounds(run: *const FedsimRun, index: usize) -> usize {
    run.as_ref().and_then(|r| r.0.get(index)).map_or(0, |l| l.rows.len())
}

/// Dimension of the final iterate of log `index`, or 0 for a bad handle.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_dim(run: *const FedsimRun, index: usize) -> usize {
    run.as_ref()
        .and_then(|r| r.0.get(index))
        .map_or(0, |l| l.final_iterate.len())
}

/// Copies the final iterate of log `index`.
///
/// # Safety
/// `out` must have room for [`fedsim_run_dim`] doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_final_iterate(run: *const FedsimRun, index: usize, out: *mut f64) -> FedsimStatus {
    guard(|| {
        let log = log_at(run, index)?;
        output(out, log.final_iterate.len())?.copy_from_slice(log.final_iterate.as_slice());
        Ok(())
    })
}

/// Copies the per-round optimality gaps `f(x^r) − f*` of log `index`.
///
/// # Safety
/// `out` must have room for [`fedsim_run_rounds`] doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_f_gaps(run: *const FedsimRun, index: usize, out: *mut f64) -> FedsimStatus {
    guard(|| {
        let log = log_at(run, index)?;
        let out = output(out, log.rows.len())?;
        for (o, r) in out.iter_mut().zip(&log.rows) {
            *o = r.f_gap;
        }
        Ok(())
    })
}

/// Copies the per-round squared distances to the minimizer of log `index`.
///
/// # Safety
/// `out` must have room for [`fedsim_run_rounds`] doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_dist_sq(run: *const FedsimRun, index: usize, out: *mut f64) -> FedsimStatus {
    guard(|| {
        let log = log_at(run, index)?;
        let out = output(out, log.rows.len())?;
        for (o, r) in out.iter_mut().zip(&log.rows) {
            *o = r.dist_sq;
        }
        Ok(())
    })
}

/// Writes log `index` as CSV to `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_write_csv(
    run: *const FedsimRun,
    index: usize,
    path: *const c_char,
) -> FedsimStatus {
    guard(|| {
        let log = log_at(run, index)?;
        emit_csv(log, Path::new(string(path)?)).map_err(from_error)
    })
}
