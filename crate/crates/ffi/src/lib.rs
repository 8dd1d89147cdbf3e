//! C ABI for detgas.
//!
//! Every function returns a [`DetgasStatus`]; on failure the message is
//! available from [`detgas_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function. Points are
//! passed as row-major `n_points x coord_dim` arrays of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use detgas::basis::{bergman_function, gram, orthonormalize, Realization, SectionBasis};
use detgas::detcore::{candidate_pool, fekete_search, logdet, Configuration, FeketeBudget};
use detgas::domain::{BaseMeasure, Point, Weight, WeightedDomain};
use detgas::harness::{cmd_diag, cmd_fekete, cmd_ldp, cmd_sample, exit_code, ExperimentConfig, RunContext};
use detgas::quadrature::QuadratureSpec;
use detgas::sampler::{run_chain, ChainConfig, DppSampler, EnsembleSpec};
use detgas::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetgasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    NumericalFailure = 4,
    MissingInput = 5,
    BufferTooSmall = 6,
    Panic = 7,
    Other = 8,
}

/// A compact set with its weight.
pub struct DetgasDomain {
    inner: Arc<WeightedDomain>,
}

/// An ensemble of degree `p` and inverse temperature `beta` for the uniform
/// base measure, with a basis orthonormalized for it.
pub struct DetgasEnsemble {
    spec: EnsembleSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DetgasStatus {
    match e {
        Error::Config(_) => DetgasStatus::ConfigError,
        e if e.is_numerical() => DetgasStatus::NumericalFailure,
        Error::MissingInput(_) | Error::Provenance(_) => DetgasStatus::MissingInput,
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::OutsideDomain | Error::Unsupported(_) => {
            DetgasStatus::InvalidArgument
        }
        _ => DetgasStatus::Other,
    }
}

enum Fail {
    Status(DetgasStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(DetgasStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DetgasStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DetgasStatus::Ok,
        Ok(Err(Fail::Status(s, m))) => {
            set_error(m);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {m}"));
            DetgasStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail::Status(DetgasStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn read_points(data: *const f64, n_points: usize, dim: usize) -> Result<Vec<Point>, Fail> {
    if data.is_null() {
        return Err(null("points"));
    }
    let flat = std::slice::from_raw_parts(data, n_points * dim);
    Ok(flat.chunks(dim.max(1)).map(|c| c.to_vec()).collect())
}

unsafe fn write_points(points: &[Point], out: *mut f64, capacity: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    let need: usize = points.iter().map(|x| x.len()).sum();
    if capacity < need {
        return Err(Fail::Status(
            DetgasStatus::BufferTooSmall,
            format!("output buffer holds {capacity} doubles, need {need}"),
        ));
    }
    let mut k = 0;
    for x in points {
        for v in x {
            *out.add(k) = *v;
            k += 1;
        }
    }
    Ok(())
}

fn boxed<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Last error message on this thread, or NULL. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn detgas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn detgas_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Box `prod [lower_i, upper_i]` in R^dim with `phi = quadratic_a |x|^2`.
///
/// # Safety
/// `lower` and `upper` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detgas_domain_box(
    dim: usize,
    lower: *const f64,
    upper: *const f64,
    quadratic_a: f64,
    out: *mut *mut DetgasDomain,
) -> DetgasStatus {
    guard(|| {
        if lower.is_null() || upper.is_null() {
            return Err(null("bounds"));
        }
        let lo = std::slice::from_raw_parts(lower, dim).to_vec();
        let hi = std::slice::from_raw_parts(upper, dim).to_vec();
        let model = detgas::domain::AmbientModel::euclidean(dim)?;
        let phi = if quadratic_a == 0.0 { Weight::Zero } else { Weight::Quadratic(quadratic_a) };
        let d = WeightedDomain::new(model, detgas::domain::Region::Box { lower: lo, upper: hi }, phi, 1.0)?;
        boxed(out, DetgasDomain { inner: Arc::new(d) })
    })
}

/// Full sphere S^dim (dim = 1 or 2) with `phi = 0`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detgas_domain_sphere(dim: usize, out: *mut *mut DetgasDomain) -> DetgasStatus {
    guard(|| {
        let d = WeightedDomain::full_sphere(dim, Weight::Zero)?;
        boxed(out, DetgasDomain { inner: Arc::new(d) })
    })
}

/// Domain of a complete experiment config given as TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detgas_domain_from_config(toml: *const c_char, out: *mut *mut DetgasDomain) -> DetgasStatus {
    guard(|| {
        let cfg = ExperimentConfig::parse(cstr(toml, "config")?)?;
        boxed(out, DetgasDomain { inner: cfg.build_domain()? })
    })
}

/// Number of coordinates of a point of the domain.
///
/// # Safety
/// `domain` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn detgas_domain_coord_dim(domain: *const DetgasDomain) -> usize {
    domain.as_ref().map_or(0, |d| d.inner.coord_dim())
}

/// # Safety
/// `domain` must come from a `detgas_domain_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn detgas_domain_free(domain: *mut DetgasDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// Builds the degree-`p` ensemble with inverse temperature `beta` over the
/// uniform measure of `domain`.
///
/// # Safety
/// `domain` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detgas_ensemble_new(
    domain: *const DetgasDomain,
    p: usize,
    beta: f64,
    out: *mut *mut DetgasEnsemble,
) -> DetgasStatus {
    guard(|| {
        let d = domain.as_ref().ok_or_else(|| null("domain"))?.inner.clone();
        let mu = Arc::new(BaseMeasure::uniform(d.clone()));
        let raw = SectionBasis::build_for(&d, p, Realization::Orthogonal)?;
        let g = gram(&raw, &d, &mu, &QuadratureSpec::default())?;
        let basis = Arc::new(orthonormalize(&raw, &g)?);
        boxed(out, DetgasEnsemble { spec: EnsembleSpec::new(beta, mu, basis)? })
    })
}

/// `N_p`, the number of points of a configuration (0 for NULL).
///
/// # Safety
/// `ens` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn detgas_ensemble_n(ens: *const DetgasEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.spec.n_p())
}

/// # Safety
/// `ens` must come from [`detgas_ensemble_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn detgas_ensemble_free(ens: *mut DetgasEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// `log|det|` of the weighted evaluation matrix at `N_p` points (`-inf` when singular).
///
/// # Safety
/// `points` must hold `N_p * coord_dim` doubles; `out_logdet` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detgas_logdet(
    ens: *const DetgasEnsemble,
    points: *const f64,
    out_logdet: *mut f64,
) -> DetgasStatus {
    guard(|| {
        let e = ens.as_ref().ok_or_else(|| null("ensemble"))?;
        let out = out_logdet.as_mut().ok_or_else(|| null("out_logdet"))?;
        let pts = read_points(points, e.spec.n_p(), e.spec.domain().coord_dim())?;
        let c = Configuration::new(pts, e.spec.p());
        *out = logdet(e.spec.basis(), e.spec.domain(), &c)?.0;
        Ok(())
    })
}

/// Bergman function `rho_p(x)`.
///
/// # Safety
/// `x` must hold `coord_dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detgas_bergman(ens: *const DetgasEnsemble, x: *const f64, out: *mut f64) -> DetgasStatus {
    guard(|| {
        let e = ens.as_ref().ok_or_else(|| null("ensemble"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let pt = read_points(x, 1, e.spec.domain().coord_dim())?;
        *out = bergman_function(e.spec.basis(), e.spec.domain(), &pt[0])?;
        Ok(())
    })
}

/// Approximate Fekete configuration written to `out_points` (`N_p * coord_dim` doubles).
/// `grid_res = 0` selects 256 on curves and 32 otherwise.
///
/// # Safety
/// `out_points` must hold `capacity` doubles; `out_logdet` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn detgas_fekete(
    ens: *const DetgasEnsemble,
    seed: u64,
    grid_res: usize,
    out_points: *mut f64,
    capacity: usize,
    out_logdet: *mut f64,
) -> DetgasStatus {
    guard(|| {
        let e = ens.as_ref().ok_or_else(|| null("ensemble"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid_res = match grid_res {
            0 if e.spec.domain().model().manifold_dim() == 1 => 256,
            0 => 32,
            g => g,
        };
        let pool = candidate_pool(e.spec.domain(), e.spec.measure(), e.spec.n_p(), grid_res, &mut rng)?;
        let r = fekete_search(e.spec.basis(), e.spec.domain(), &pool, &FeketeBudget::default())?;
        write_points(r.config.points(), out_points, capacity)?;
        if let Some(l) = out_logdet.as_mut() {
            *l = r.logdet;
        }
        Ok(())
    })
}

/// `keep` configurations of an MCMC chain started from `init` (`N_p * coord_dim`
/// doubles), written consecutively to `out_points`. Zero `burn_in` or `thin`
/// select the defaults `50 N_p^2` and `N_p`. `out_acceptance` may be NULL.
///
/// # Safety
/// Buffers must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn detgas_sample_mcmc(
    ens: *const DetgasEnsemble,
    init: *const f64,
    seed: u64,
    stream: u64,
    burn_in: usize,
    thin: usize,
    keep: usize,
    out_points: *mut f64,
    capacity: usize,
    out_acceptance: *mut f64,
) -> DetgasStatus {
    guard(|| {
        let e = ens.as_ref().ok_or_else(|| null("ensemble"))?;
        let pts = read_points(init, e.spec.n_p(), e.spec.domain().coord_dim())?;
        let cfg = ChainConfig {
            burn_in: (burn_in > 0).then_some(burn_in),
            keep,
            thin: (thin > 0).then_some(thin),
        };
        let need = keep * e.spec.n_p() * e.spec.domain().coord_dim();
        if capacity < need {
            return Err(Fail::Status(
                DetgasStatus::BufferTooSmall,
                format!("output buffer holds {capacity} doubles, need {need}"),
            ));
        }
        let out = run_chain(&e.spec, &Configuration::new(pts, e.spec.p()), &cfg, seed, stream)?;
        let all: Vec<Point> = out.samples.into_iter().flat_map(|c| c.into_points()).collect();
        write_points(&all, out_points, capacity)?;
        if let Some(a) = out_acceptance.as_mut() {
            *a = out.acceptance_rate;
        }
        Ok(())
    })
}

/// One exact sample of a `beta = 2` ensemble.
///
/// # Safety
/// `out_points` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn detgas_sample_dpp(
    ens: *const DetgasEnsemble,
    seed: u64,
    out_points: *mut f64,
    capacity: usize,
) -> DetgasStatus {
    guard(|| {
        let e = ens.as_ref().ok_or_else(|| null("ensemble"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = DppSampler::with_default_grid(&e.spec)?.sample(&mut rng)?;
        write_points(c.points(), out_points, capacity)
    })
}

/// Runs a harness command (`fekete`, `sample`, `ldp` or `diag`) on a config
/// file. `out_dir` may be NULL to use the config's directory; the seed
/// overrides the config's when `has_seed` is nonzero. `out_exit_code`, if not
/// NULL, receives the command-line exit code.
///
/// # Safety
/// Strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn detgas_run_command(
    command: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
    has_seed: i32,
    seed: u64,
    workers: usize,
    out_exit_code: *mut i32,
) -> DetgasStatus {
    let mut code = 1;
    let status = guard(|| {
        let cmd = cstr(command, "command")?;
        let path = PathBuf::from(cstr(config_path, "config path")?);
        let out = if out_dir.is_null() { None } else { Some(PathBuf::from(cstr(out_dir, "out dir")?)) };
        let res = ExperimentConfig::load(&path).and_then(|cfg| {
            let ctx = RunContext::new(cfg, (has_seed != 0).then_some(seed), out, workers)?;
            match cmd {
                "fekete" => cmd_fekete(&ctx),
                "sample" => cmd_sample(&ctx),
                "ldp" => cmd_ldp(&ctx),
                "diag" => cmd_diag(&ctx),
                other => Err(Error::InvalidArgument(format!("unknown command '{other}'"))),
            }
        });
        match res {
            Ok(_) => {
                code = 0;
                Ok(())
            }
            Err(e) => {
                code = exit_code(&e);
                Err(e.into())
            }
        }
    });
    if let Some(c) = out_exit_code.as_mut() {
        *c = code;
    }
    status
}
