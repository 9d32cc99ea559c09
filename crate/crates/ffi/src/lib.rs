//! C ABI for `lowreg`.
//!
//! Every fallible function returns a [`LowregStatus`]; on failure a
//! human-readable message is available from [`lowreg_last_error_message`] on
//! the same thread. Objects cross the boundary as opaque handles created by
//! `*_new`/`*_parse`/`*_from_*` functions and released by the matching
//! `*_free`. Passing NULL to a `*_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lowreg::catalog::Model;
use lowreg::cli::{run_command, Command, Verdict};
use lowreg::config::ExperimentConfig;
use lowreg::curvature::{bakry_emery_ricci, interior_sup, kink_mask};
use lowreg::weakform::{default_test_family, deficit_sweep, LowerBoundSpec, WeakForm};
use lowreg::{Error, Expr, Mode};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowregStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Expression = 3,
    Config = 4,
    InvalidInput = 5,
    Resolution = 6,
    Solver = 7,
    Uncertified = 8,
    Io = 9,
    Panic = 10,
}

/// Derivative mode.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowregMode {
    Analytic = 0,
    Fd = 1,
}

/// Pipeline run by [`lowreg_experiment_run`], one per CLI subcommand.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowregCommand {
    Curvature = 0,
    WeakVerify = 1,
    MollifyConverge = 2,
    Gradapprox = 3,
    HeatCheck = 4,
    VolumeCheck = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowregVerdict {
    Pass = 0,
    Fail = 1,
}

/// Summary of a lower-bound sweep over the default test family.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowregSweepSummary {
    pub tests: usize,
    /// Tests whose deficit falls below minus the quadrature defect.
    pub failing: usize,
    /// Deficit and defect of the test with the smallest `deficit + defect`.
    pub worst_deficit: f64,
    pub worst_defect: f64,
}

/// Parsed expression.
pub struct LowregExpr {
    inner: Expr,
}

/// Catalog model sampled on its default chart.
pub struct LowregModel {
    inner: Model,
}

/// Validated experiment configuration.
pub struct LowregExperiment {
    inner: ExperimentConfig,
}

/// Verdict and report lines of one pipeline run.
pub struct LowregOutcome {
    verdict: LowregVerdict,
    lines: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LowregStatus {
    match e {
        Error::Expr(_) | Error::Sample { .. } => LowregStatus::Expression,
        Error::Config { .. } => LowregStatus::Config,
        Error::Resolution(_) => LowregStatus::Resolution,
        Error::Solver { .. } => LowregStatus::Solver,
        Error::Uncertified(_) => LowregStatus::Uncertified,
        Error::Io(_) => LowregStatus::Io,
        _ => LowregStatus::InvalidInput,
    }
}

/// Failure carried out of a guarded body.
struct Fail(LowregStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<lowreg::expr::ExprError> for Fail {
    fn from(e: lowreg::expr::ExprError) -> Self {
        Fail(LowregStatus::Expression, e.to_string())
    }
}

/// Runs `body`, records any error or panic and converts it into a status.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> LowregStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LowregStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {what}"));
            LowregStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LowregStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(LowregStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn mode(m: LowregMode) -> Mode {
    match m {
        LowregMode::Analytic => Mode::Analytic,
        LowregMode::Fd => Mode::Fd,
    }
}

fn boxed<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lowreg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into the library on this
/// thread.
#[no_mangle]
pub extern "C" fn lowreg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lowreg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `source` over variables `x1..x{dim}`.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lowreg_expr_parse(
    source: *const c_char,
    dim: usize,
    out: *mut *mut LowregExpr,
) -> LowregStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let inner = lowreg::parse_expr(text(source, "source")?, dim)?;
        boxed(out, LowregExpr { inner });
        Ok(())
    })
}

/// Evaluates at `point[0..len]`.
///
/// # Safety
/// `expr` must be a live handle, `point` must hold `len` doubles and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_expr_eval(
    expr: *const LowregExpr,
    point: *const f64,
    len: usize,
    out: *mut f64,
) -> LowregStatus {
    guard(|| {
        let e = deref(expr, "expr")?;
        let out = out_ref(out, "out")?;
        if point.is_null() && len > 0 {
            return Err(null("point"));
        }
        let x = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(point, len)
        };
        *out = e.inner.eval(x)?;
        Ok(())
    })
}

/// Symbolic partial derivative with respect to `x{var + 1}`.
///
/// # Safety
/// `expr` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_expr_diff(
    expr: *const LowregExpr,
    var: usize,
    out: *mut *mut LowregExpr,
) -> LowregStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let inner = deref(expr, "expr")?.inner.diff(var)?;
        boxed(out, LowregExpr { inner });
        Ok(())
    })
}

/// Canonical source text; release with [`lowreg_string_free`].
///
/// # Safety
/// `expr` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_expr_to_string(
    expr: *const LowregExpr,
    out: *mut *mut c_char,
) -> LowregStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let s = deref(expr, "expr")?.inner.to_string();
        *out = CString::new(s).unwrap_or_default().into_raw();
        Ok(())
    })
}

/// # Safety
/// `expr` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lowreg_expr_free(expr: *mut LowregExpr) {
    if !expr.is_null() {
        drop(Box::from_raw(expr));
    }
}

/// Builds catalog model `name` on its default chart with `m` nodes per axis.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_model_new(
    name: *const c_char,
    m: usize,
    out: *mut *mut LowregModel,
) -> LowregStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let inner = Model::standard(text(name, "name")?, m)?;
        boxed(out, LowregModel { inner });
        Ok(())
    })
}

/// Number of grid nodes (collar included).
///
/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_model_node_count(
    model: *const LowregModel,
    out: *mut usize,
) -> LowregStatus {
    guard(|| {
        *out_ref(out, "out")? = deref(model, "model")?.inner.metric.grid().len();
        Ok(())
    })
}

/// Interior sup of `|Ric_(μ,∞) − κ g|` against the model's exact curvature,
/// skipping nodes next to kinks.
///
/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_model_ricci_deviation(
    model: *const LowregModel,
    m: LowregMode,
    out: *mut f64,
) -> LowregStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = &deref(model, "model")?.inner;
        let grid = model.metric.grid();
        let n = grid.dim();
        let ric = bakry_emery_ricci(&model.metric, &model.weight, f64::INFINITY, mode(m))?;
        let exact = model.exact_ricci()?;
        let diff: Vec<f64> = (0..grid.len())
            .map(|p| {
                (0..n * n)
                    .map(|c| (ric.get(c, p) - exact.get(c, p)).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        *out = interior_sup(&diff, grid, Some(&kink_mask(&model.metric)));
        Ok(())
    })
}

/// Lower-bound deficits `Ric_(μ,N) ≥ K` over the default test family drawn
/// with `seed`. Pass `INFINITY` for `big_n` to drop the dimension term.
///
/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_model_lower_bound_sweep(
    model: *const LowregModel,
    k: f64,
    big_n: f64,
    seed: u64,
    m: LowregMode,
    out: *mut LowregSweepSummary,
) -> LowregStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = &deref(model, "model")?.inner;
        let form = WeakForm::new(&model.metric, &model.weight, mode(m))?;
        let family = default_test_family(&model.metric, seed, mode(m))?;
        let sweep = deficit_sweep(&form, &LowerBoundSpec::new(k, big_n), &family)?;
        let worst = sweep
            .worst()
            .ok_or_else(|| Fail(LowregStatus::InvalidInput, "empty test family".into()))?;
        *out = LowregSweepSummary {
            tests: sweep.rows.len(),
            failing: sweep.rows.iter().filter(|r| !r.passes()).count(),
            worst_deficit: worst.deficit,
            worst_defect: worst.defect,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lowreg_model_free(model: *mut LowregModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn experiment(cfg: ExperimentConfig, out: &mut *mut LowregExperiment) -> Result<(), Fail> {
    cfg.validate()?;
    boxed(out, LowregExperiment { inner: cfg });
    Ok(())
}

/// Parses and validates a TOML experiment configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_experiment_from_toml(
    toml: *const c_char,
    out: *mut *mut LowregExperiment,
) -> LowregStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        experiment(ExperimentConfig::from_toml_str(text(toml, "toml")?)?, out)
    })
}

/// Reads, parses and validates a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_experiment_from_path(
    path: *const c_char,
    out: *mut *mut LowregExperiment,
) -> LowregStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        experiment(
            ExperimentConfig::from_path(Path::new(text(path, "path")?))?,
            out,
        )
    })
}

/// Runs one pipeline, writing its CSV files into `out_dir` (created if
/// missing). A FAIL verdict is a successful call; inspect the outcome.
///
/// # Safety
/// `exp` must be a live handle, `out_dir` a NUL-terminated string and `out`
/// valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_experiment_run(
    exp: *const LowregExperiment,
    command: LowregCommand,
    out_dir: *const c_char,
    out: *mut *mut LowregOutcome,
) -> LowregStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let cfg = &deref(exp, "experiment")?.inner;
        let cmd = match command {
            LowregCommand::Curvature => Command::Curvature,
            LowregCommand::WeakVerify => Command::WeakVerify,
            LowregCommand::MollifyConverge => Command::MollifyConverge,
            LowregCommand::Gradapprox => Command::Gradapprox,
            LowregCommand::HeatCheck => Command::HeatCheck,
            LowregCommand::VolumeCheck => Command::VolumeCheck,
        };
        let o = run_command(cmd, cfg, Path::new(text(out_dir, "out_dir")?))?;
        boxed(
            out,
            LowregOutcome {
                verdict: match o.verdict {
                    Verdict::Pass => LowregVerdict::Pass,
                    Verdict::Fail => LowregVerdict::Fail,
                },
                lines: o
                    .lines
                    .into_iter()
                    .map(|l| CString::new(l.replace('\0', " ")).unwrap_or_default())
                    .collect(),
            },
        );
        Ok(())
    })
}

/// # Safety
/// `exp` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lowreg_experiment_free(exp: *mut LowregExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `outcome` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lowreg_outcome_verdict(
    outcome: *const LowregOutcome,
    out: *mut LowregVerdict,
) -> LowregStatus {
    guard(|| {
        *out_ref(out, "out")? = deref(outcome, "outcome")?.verdict;
        Ok(())
    })
}

/// Number of report lines; 0 for NULL.
///
/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lowreg_outcome_line_count(outcome: *const LowregOutcome) -> usize {
    outcome.as_ref().map_or(0, |o| o.lines.len())
}

/// Report line `index`, owned by the outcome; NULL when out of range.
///
/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lowreg_outcome_line(
    outcome: *const LowregOutcome,
    index: usize,
) -> *const c_char {
    outcome
        .as_ref()
        .and_then(|o| o.lines.get(index))
        .map_or(ptr::null(), |l| l.as_ptr())
}

/// # Safety
/// `outcome` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lowreg_outcome_free(outcome: *mut LowregOutcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}
