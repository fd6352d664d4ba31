//! C interface to `rnuclei`.
//!
//! Every function returns an [`RnStatus`]. On failure the message is kept in
//! a thread-local buffer readable with [`rn_last_error_message`]. Objects are
//! opaque handles created by `rn_*_new`/`rn_*_from_toml` and released by the
//! matching `rn_*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rnuclei::config::{Aabb, ModelSpec, NuclearConfiguration};
use rnuclei::electrostatics::{coulomb_energy, trial_energy, yukawa_energy, PointCharge};
use rnuclei::error::Error;
use rnuclei::geometry::DomainShape;
use rnuclei::harness::{run_with_threads, DomainSpec, ExperimentSpec};
use rnuclei::moments::{estimate_moment, Statistic};
use rnuclei::vec3::Vec3;

/// Status codes. Codes 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A specification violates the schema.
    Schema = 2,
    /// Invalid input or a failed numerical precondition.
    Numerical = 3,
    /// File or CSV failure.
    Io = 4,
    /// A string argument is not valid UTF-8.
    InvalidUtf8 = 5,
    /// An index is out of range.
    OutOfRange = 6,
    /// The library panicked. This is a bug.
    Panic = 7,
}

/// Statistics accepted by [`rn_estimate_moment`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnStatistic {
    X0 = 0,
    X1 = 1,
    /// `X'_p` with exponent and cap passed separately.
    XpTruncated = 2,
    DeltaAtOrigin = 3,
    InverseDeltaAtOrigin = 4,
    ChargePerCell = 5,
}

/// A random nuclear model.
pub struct RnModel(ModelSpec);

/// One sampled nuclear configuration.
pub struct RnConfiguration(NuclearConfiguration);

/// A measurable domain in space.
pub struct RnDomain(DomainShape);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RnMoment {
    pub mean: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub level: f64,
    pub replicas: usize,
    pub truncated: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RnEnergy {
    pub kinetic: f64,
    pub boundary: f64,
    pub total: f64,
    pub nuclei: usize,
    pub collar_nuclei: usize,
    pub on_top: usize,
    pub truncated: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::default());
}

fn status_of(e: &Error) -> RnStatus {
    match e.exit_code() {
        2 => RnStatus::Schema,
        4 => RnStatus::Io,
        _ => RnStatus::Numerical,
    }
}

struct Fail(RnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(RnStatus::NullArgument, format!("{name} is null"))
}

/// Runs `f`, recording any failure or panic in the error buffer.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RnStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RnStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            RnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(RnStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn vec3_arg(p: *const f64, name: &str) -> Result<Vec3, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Vec3::new(s[0], s[1], s[2]))
}

/// Message of the last failure on this thread, or an empty string. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn rn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Gaussian-perturbed cubic lattice with unit charges and standard deviation `sigma`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rn_model_gaussian(sigma: f64, out: *mut *mut RnModel) -> RnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ModelSpec::gaussian(sigma);
        m.validate()?;
        *out = Box::into_raw(Box::new(RnModel(m)));
        Ok(())
    })
}

/// Model from a TOML table, e.g. `kind = "poisson"`, `intensity = 1`, `charge = { kind = "constant", z = 1 }`.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rn_model_from_toml(toml: *const c_char, out: *mut *mut RnModel) -> RnStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(RnModel(ModelSpec::from_toml(text)?)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rn_model_free(model: *mut RnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Mean charge per unit volume of the model.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rn_model_charge_density(model: *const RnModel, out: *mut f64) -> RnStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(model, "model")?.0.mean_charge_density();
        Ok(())
    })
}

/// Samples the nuclei falling in the box `[lo, hi)` expanded by `margin`.
///
/// # Safety
/// `lo` and `hi` must point to three doubles, `model` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rn_model_sample(
    model: *const RnModel,
    lo: *const f64,
    hi: *const f64,
    margin: f64,
    seed: u64,
    out: *mut *mut RnConfiguration,
) -> RnStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let window = Aabb::new(vec3_arg(lo, "lo")?, vec3_arg(hi, "hi")?);
        let out = out_arg(out, "out")?;
        let c = model.0.sample(window, margin, seed)?;
        *out = Box::into_raw(Box::new(RnConfiguration(c)));
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rn_configuration_free(config: *mut RnConfiguration) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Number of nuclei; 0 for a null handle.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rn_configuration_len(config: *const RnConfiguration) -> usize {
    config.as_ref().map_or(0, |c| c.0.nuclei.len())
}

/// Position and charge of nucleus `index`.
///
/// # Safety
/// `config` must be live, `position` must point to three writable doubles and `charge` to one.
#[no_mangle]
pub unsafe extern "C" fn rn_configuration_nucleus(
    config: *const RnConfiguration,
    index: usize,
    position: *mut f64,
    charge: *mut f64,
) -> RnStatus {
    guard(|| {
        let c = ref_arg(config, "config")?;
        if position.is_null() {
            return Err(null("position"));
        }
        let charge = out_arg(charge, "charge")?;
        let n = c.0.nuclei.get(index).ok_or_else(|| {
            Fail(RnStatus::OutOfRange, format!("nucleus {index} out of range (len {})", c.0.nuclei.len()))
        })?;
        std::slice::from_raw_parts_mut(position, 3).copy_from_slice(&n.position.0);
        *charge = n.charge;
        Ok(())
    })
}

/// Union of `side^3` unit lattice cells `[-1/2, side - 1/2)^3`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rn_domain_aligned_cube(side: usize, out: *mut *mut RnDomain) -> RnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(RnDomain(DomainShape::aligned_cube(side)?)));
        Ok(())
    })
}

/// Domain from a TOML table, e.g. `kind = "ball"` and `radius = 4`.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rn_domain_from_toml(toml: *const c_char, out: *mut *mut RnDomain) -> RnStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(RnDomain(DomainSpec::shape_from_toml(text)?)));
        Ok(())
    })
}

/// # Safety
/// `domain` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rn_domain_free(domain: *mut RnDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// # Safety
/// `domain` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rn_domain_volume(domain: *const RnDomain, out: *mut f64) -> RnStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(domain, "domain")?.0.volume();
        Ok(())
    })
}

/// Signed distance to the boundary, negative inside.
///
/// # Safety
/// `domain` must be live, `point` must point to three doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rn_domain_signed_distance(
    domain: *const RnDomain,
    point: *const f64,
    out: *mut f64,
) -> RnStatus {
    guard(|| {
        let d = ref_arg(domain, "domain")?;
        *out_arg(out, "out")? = d.0.signed_distance(vec3_arg(point, "point")?);
        Ok(())
    })
}

/// # Safety
/// `domain` must be live, `point` must point to three doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rn_domain_contains(domain: *const RnDomain, point: *const f64, out: *mut bool) -> RnStatus {
    guard(|| {
        let d = ref_arg(domain, "domain")?;
        *out_arg(out, "out")? = d.0.contains(vec3_arg(point, "point")?);
        Ok(())
    })
}

/// Monte Carlo estimate of `E[statistic^p]` at the origin cell over `replicas`
/// independent configurations. `xp` and `eps` are used by `XpTruncated` only.
///
/// # Safety
/// `model` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rn_estimate_moment(
    model: *const RnModel,
    statistic: RnStatistic,
    xp: f64,
    eps: f64,
    p: f64,
    replicas: usize,
    seed: u64,
    out: *mut RnMoment,
) -> RnStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let out = out_arg(out, "out")?;
        let stat = match statistic {
            RnStatistic::X0 => Statistic::X0,
            RnStatistic::X1 => Statistic::X1,
            RnStatistic::XpTruncated => Statistic::XpTruncated { p: xp, eps },
            RnStatistic::DeltaAtOrigin => Statistic::DeltaAtOrigin,
            RnStatistic::InverseDeltaAtOrigin => Statistic::InverseDeltaAtOrigin,
            RnStatistic::ChargePerCell => Statistic::ChargePerCell,
        };
        let m = estimate_moment(&model.0, stat, p, replicas, seed)?;
        *out = RnMoment {
            mean: m.mean,
            std_error: m.stderr,
            ci_lo: m.lo,
            ci_hi: m.hi,
            level: m.level,
            replicas: m.replicas,
            truncated: m.truncated,
        };
        Ok(())
    })
}

/// Proxy energy of the screened trial state of `config` restricted to `domain`.
///
/// # Safety
/// `config` and `domain` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rn_trial_energy(
    config: *const RnConfiguration,
    domain: *const RnDomain,
    cone_epsilon: f64,
    c_kin: f64,
    out: *mut RnEnergy,
) -> RnStatus {
    guard(|| {
        let c = ref_arg(config, "config")?;
        let d = ref_arg(domain, "domain")?;
        let out = out_arg(out, "out")?;
        let e = trial_energy(&c.0, &d.0, cone_epsilon, c_kin)?;
        *out = RnEnergy {
            kinetic: e.kinetic,
            boundary: e.boundary,
            total: e.total(),
            nuclei: e.nuclei,
            collar_nuclei: e.collar_nuclei,
            on_top: e.on_top,
            truncated: e.truncated,
        };
        Ok(())
    })
}

unsafe fn charges_arg(positions: *const f64, charges: *const f64, n: usize) -> Result<Vec<PointCharge>, Fail> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if positions.is_null() {
        return Err(null("positions"));
    }
    if charges.is_null() {
        return Err(null("charges"));
    }
    let pos = std::slice::from_raw_parts(positions, 3 * n);
    let q = std::slice::from_raw_parts(charges, n);
    Ok((0..n).map(|i| PointCharge::new(Vec3::new(pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]), q[i])).collect())
}

/// Pair Coulomb energy of `n` point charges; `positions` holds `3n` doubles.
///
/// # Safety
/// `positions` must point to `3n` doubles, `charges` to `n` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rn_coulomb_energy(
    positions: *const f64,
    charges: *const f64,
    n: usize,
    out: *mut f64,
) -> RnStatus {
    guard(|| {
        let pc = charges_arg(positions, charges, n)?;
        *out_arg(out, "out")? = coulomb_energy(&pc)?;
        Ok(())
    })
}

/// Pair Yukawa energy with screening mass `mass`.
///
/// # Safety
/// As for [`rn_coulomb_energy`].
#[no_mangle]
pub unsafe extern "C" fn rn_yukawa_energy(
    positions: *const f64,
    charges: *const f64,
    n: usize,
    mass: f64,
    out: *mut f64,
) -> RnStatus {
    guard(|| {
        let pc = charges_arg(positions, charges, n)?;
        *out_arg(out, "out")? = yukawa_energy(&pc, mass)?;
        Ok(())
    })
}

/// Runs an experiment specification (TOML text) into `out_dir`. `threads = 0`
/// uses the default pool. On success `*manifest`, if non-null, receives the
/// manifest TOML, released with [`rn_string_free`].
///
/// # Safety
/// `spec_toml` and `out_dir` must be NUL-terminated strings; `manifest` may be null.
#[no_mangle]
pub unsafe extern "C" fn rn_run_experiment(
    spec_toml: *const c_char,
    out_dir: *const c_char,
    threads: usize,
    manifest: *mut *mut c_char,
) -> RnStatus {
    guard(|| {
        let spec = ExperimentSpec::from_toml(str_arg(spec_toml, "spec_toml")?)?;
        let dir = str_arg(out_dir, "out_dir")?;
        let threads = (threads > 0).then_some(threads);
        let m = run_with_threads(&spec, Path::new(dir), threads)?;
        if !manifest.is_null() {
            let text = CString::new(m.to_toml()?).map_err(|e| Fail(RnStatus::Io, e.to_string()))?;
            *manifest = text.into_raw();
        }
        Ok(())
    })
}

/// Checks an experiment specification without running it. On schema failure the
/// error message lists every violation separated by `"; "`.
///
/// # Safety
/// `spec_toml` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rn_validate_experiment(spec_toml: *const c_char) -> RnStatus {
    guard(|| {
        ExperimentSpec::from_toml(str_arg(spec_toml, "spec_toml")?)?.validate()?;
        Ok(())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

