//! C ABI for `dsm-geom`.
//!
//! Models are opaque handles. Every function returns a [`DsmStatus`]; on a
//! non-`Ok` status the message is available from [`dsm_last_error`] on the
//! same thread. Arrays are caller-allocated: metrics are `n*n` row-major,
//! connections `n*n*n` indexed `(k*n + i)*n + j` for ω^k_ij.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dsm_geom::geometry::{connection_at, curvature_at, metric_at, ConnectionField, GeometryConfig};
use dsm_geom::models::{by_name, CatalogueEntry, ModelParams};
use dsm_geom::structure::classify;
use dsm_geom::transport::geodesic;
use dsm_geom::GeomError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Condition4Violated = 4,
    HessianStructureViolated = 5,
    NumericalFailure = 6,
    NoConvergence = 7,
    Unsupported = 8,
    Panic = 9,
}

/// Opaque model handle.
pub struct DsmModel {
    entry: CatalogueEntry,
    cfg: GeometryConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &GeomError) -> DsmStatus {
    match e {
        GeomError::Domain { .. } | GeomError::DataDomain(_) => DsmStatus::Domain,
        GeomError::Condition4Violated(_) => DsmStatus::Condition4Violated,
        GeomError::HessianStructureViolated { .. } => DsmStatus::HessianStructureViolated,
        GeomError::NoConvergence { .. } => DsmStatus::NoConvergence,
        GeomError::Unsupported(_) | GeomError::FibreUnavailable(_) => DsmStatus::Unsupported,
        GeomError::Config(_) | GeomError::MissingStatistic { .. } => DsmStatus::InvalidArgument,
        _ => DsmStatus::NumericalFailure,
    }
}

struct Fail(DsmStatus, String);

impl From<GeomError> for Fail {
    fn from(e: GeomError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DsmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DsmStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(&m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {m}"));
            DsmStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(m: *const DsmModel) -> Result<&'a DsmModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(DsmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn point<'a>(m: &DsmModel, theta: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if theta.is_null() {
        return Err(null(what));
    }
    let dim = m.entry.model.chart().dim();
    if n != dim {
        return Err(Fail(
            DsmStatus::InvalidArgument,
            format!("{what} has length {n}, the chart has dimension {dim}"),
        ));
    }
    Ok(std::slice::from_raw_parts(theta, n))
}

unsafe fn out_slice<'a>(out: *mut f64, len: usize) -> Result<&'a mut [f64], Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    Ok(std::slice::from_raw_parts_mut(out, len))
}

/// Creates a catalogue model. `params_json` may be null for defaults, else a
/// JSON object with any of `levels`, `kappa`, `lambda`, `mu0`, `sigma0`.
///
/// # Safety
/// `name` and a non-null `params_json` must be NUL-terminated strings; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsm_model_new(
    name: *const c_char,
    params_json: *const c_char,
    out: *mut *mut DsmModel,
) -> DsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(name, "name")?;
        let params: ModelParams = if params_json.is_null() {
            ModelParams::default()
        } else {
            serde_json::from_str(str_arg(params_json, "params_json")?)
                .map_err(|e| Fail(DsmStatus::InvalidArgument, format!("params_json: {e}")))?
        };
        let entry = by_name(name, &params)?;
        *out = Box::into_raw(Box::new(DsmModel {
            entry,
            cfg: GeometryConfig::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`dsm_model_new`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dsm_model_free(model: *mut DsmModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsm_model_dim(model: *const DsmModel, out: *mut usize) -> DsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.entry.model.chart().dim();
        Ok(())
    })
}

/// Writes the metric at `theta` into `out` (`n*n`, row-major).
///
/// # Safety
/// `theta` must hold `n` values and `out` room for `n*n`.
#[no_mangle]
pub unsafe extern "C" fn dsm_metric_at(
    model: *const DsmModel,
    theta: *const f64,
    n: usize,
    out: *mut f64,
) -> DsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let theta = point(m, theta, n, "theta")?;
        let out = out_slice(out, n * n)?;
        let g = metric_at(m.entry.model.as_ref(), theta, &m.cfg)?.metric;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = g[(i, j)];
            }
        }
        Ok(())
    })
}

/// Writes ω^k_ij at `theta` into `out[(k*n + i)*n + j]`.
///
/// # Safety
/// `theta` must hold `n` values and `out` room for `n*n*n`.
#[no_mangle]
pub unsafe extern "C" fn dsm_connection_at(
    model: *const DsmModel,
    theta: *const f64,
    n: usize,
    out: *mut f64,
) -> DsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let theta = point(m, theta, n, "theta")?;
        let out = out_slice(out, n * n * n)?;
        let c = connection_at(m.entry.model.as_ref(), theta, &m.cfg)?;
        out.copy_from_slice(c.connection.flat());
        Ok(())
    })
}

/// Largest absolute curvature component at `theta`.
///
/// # Safety
/// `theta` must hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn dsm_curvature_max(
    model: *const DsmModel,
    theta: *const f64,
    n: usize,
    out: *mut f64,
) -> DsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let theta = point(m, theta, n, "theta")?;
        let out = out_slice(out, 1)?;
        out[0] = curvature_at(m.entry.model.as_ref(), theta, &m.cfg)?.max_abs();
        Ok(())
    })
}

/// Integrates the geodesic from `theta0` with velocity `v0` to time `t`
/// and writes the endpoint into `out` (`n` values). A geodesic leaving the
/// chart stops early and reports `Domain`; `out` then holds the last point.
///
/// # Safety
/// `theta0`, `v0` and `out` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn dsm_geodesic_endpoint(
    model: *const DsmModel,
    theta0: *const f64,
    v0: *const f64,
    n: usize,
    t: f64,
    out: *mut f64,
) -> DsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let theta0 = point(m, theta0, n, "theta0")?;
        let v0 = point(m, v0, n, "v0")?;
        let out = out_slice(out, n)?;
        if !t.is_finite() {
            return Err(Fail(DsmStatus::InvalidArgument, "t must be finite".into()));
        }
        let model = m.entry.model.as_ref();
        metric_at(model, theta0, &m.cfg)?;
        let field = ConnectionField::numeric(model, &m.cfg);
        let trace = geodesic(&field, theta0, v0, t, None)?;
        let last = trace.last().ok_or_else(|| Fail(DsmStatus::NumericalFailure, "empty trace".into()))?;
        out.copy_from_slice(&last.theta);
        match &trace.domain_exit {
            Some(_) => Err(Fail(
                DsmStatus::Domain,
                format!("geodesic left the chart at t = {}", last.t),
            )),
            None => Ok(()),
        }
    })
}

/// Classifies the model on its default grid. The JSON report is returned in
/// `*out` and must be released with [`dsm_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsm_classify_json(model: *const DsmModel, out: *mut *mut c_char) -> DsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = m.entry.model.as_ref();
        let report = classify(model, &model.default_grid(), &m.cfg)?;
        let text = serde_json::to_string(&report)
            .map_err(|e| Fail(DsmStatus::NumericalFailure, format!("serialising report: {e}")))?;
        *out = CString::new(text)
            .map_err(|_| Fail(DsmStatus::NumericalFailure, "report contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dsm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dsm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn dsm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
