//! C ABI for stickflow.
//!
//! Conventions:
//! - every fallible call returns an `SfStatus`; on failure the message is
//!   kept per thread and read back with `sf_last_error_message`
//! - objects are opaque handles created by `*_new` and released by `*_free`
//! - matrices are row-major `double` arrays, states are 0-based
//! - panics never cross the boundary; they surface as `SF_STATUS_PANIC`

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use stickflow::chains::{reverse_generator, stationary_distribution, GeneratorMatrix};
use stickflow::inhom::{simulate_counts_with, InhomSpec};
use stickflow::moments::MomentEngine;
use stickflow::rng;
use stickflow::stats::gem2_clump_covariance;
use stickflow::stickcore::{sample_stick, FractionLaw};
use stickflow::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    Inadmissible = 4,
    LimitExceeded = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A validated rate matrix.
pub struct SfGenerator {
    inner: GeneratorMatrix,
}

/// Exact moment engine bound to one irreducible generator.
pub struct SfMomentEngine {
    inner: MomentEngine,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail {
    status: SfStatus,
    message: String,
}

impl Fail {
    fn null(what: &str) -> Self {
        Fail {
            status: SfStatus::NullPointer,
            message: format!("{what} is null"),
        }
    }

    fn buffer(needed: usize, got: usize) -> Self {
        Fail {
            status: SfStatus::BufferTooSmall,
            message: format!("buffer holds {got} values, {needed} needed"),
        }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail {
            status: status_of(&e),
            message: e.to_string(),
        }
    }
}

fn status_of(e: &Error) -> SfStatus {
    match e {
        Error::Singular(_) | Error::Numeric(_) => SfStatus::Numeric,
        Error::Inadmissible(_) => SfStatus::Inadmissible,
        Error::TruncationCap(_) | Error::CycleCap(_) => SfStatus::LimitExceeded,
        Error::Replicate { source, .. } => status_of(source),
        _ => SfStatus::InvalidArgument,
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SfStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SfStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::null(what))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Fail> {
    if dst.len() < src.len() {
        return Err(Fail::buffer(src.len(), dst.len()));
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns its full length plus one. Returns 0 when the
/// last call succeeded.
#[no_mangle]
pub unsafe extern "C" fn sf_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Builds a generator from `k * k` row-major rates. Rows must sum to zero
/// within 1e-9; the diagonal is then snapped to make the sums exact.
#[no_mangle]
pub unsafe extern "C" fn sf_generator_new(
    rows: *const f64,
    k: usize,
    out: *mut *mut SfGenerator,
) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::null("out"));
        }
        let len = k.checked_mul(k).ok_or_else(|| Fail {
            status: SfStatus::InvalidArgument,
            message: format!("dimension {k} overflows"),
        })?;
        let flat = input(rows, len, "rows")?;
        let rows: Vec<Vec<f64>> = flat.chunks(k.max(1)).map(<[f64]>::to_vec).collect();
        let g = GeneratorMatrix::new(&rows)?;
        *out = Box::into_raw(Box::new(SfGenerator { inner: g }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sf_generator_free(g: *mut SfGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of states, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn sf_generator_dim(g: *const SfGenerator) -> usize {
    g.as_ref().map_or(0, |g| g.inner.dim())
}

/// Copies the generator back out, diagonal included.
#[no_mangle]
pub unsafe extern "C" fn sf_generator_rows(g: *const SfGenerator, out: *mut f64, len: usize) -> SfStatus {
    guard(|| {
        let g = &handle(g, "generator")?.inner;
        let flat: Vec<f64> = g.rows().concat();
        copy_out(&flat, output(out, len, "out")?)
    })
}

/// The stationary law; fails when it is not unique.
#[no_mangle]
pub unsafe extern "C" fn sf_generator_stationary(
    g: *const SfGenerator,
    out: *mut f64,
    len: usize,
) -> SfStatus {
    guard(|| {
        let g = &handle(g, "generator")?.inner;
        let laws = stationary_distribution(g)?;
        copy_out(laws.unique()?, output(out, len, "out")?)
    })
}

/// Time reversal of `g` with respect to the stationary law `mu`.
#[no_mangle]
pub unsafe extern "C" fn sf_generator_reverse(
    g: *const SfGenerator,
    mu: *const f64,
    len: usize,
    out: *mut *mut SfGenerator,
) -> SfStatus {
    guard(|| {
        let g = &handle(g, "generator")?.inner;
        if out.is_null() {
            return Err(Fail::null("out"));
        }
        let r = reverse_generator(g, input(mu, len, "mu")?)?;
        *out = Box::into_raw(Box::new(SfGenerator { inner: r }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sf_moment_engine_new(
    g: *const SfGenerator,
    out: *mut *mut SfMomentEngine,
) -> SfStatus {
    guard(|| {
        let g = &handle(g, "generator")?.inner;
        if out.is_null() {
            return Err(Fail::null("out"));
        }
        let e = MomentEngine::new(g)?;
        *out = Box::into_raw(Box::new(SfMomentEngine { inner: e }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sf_moment_engine_free(e: *mut SfMomentEngine) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// `E prod_i nu(i)^m_i` for a multi-index of length `k`.
#[no_mangle]
pub unsafe extern "C" fn sf_moment_engine_joint(
    e: *const SfMomentEngine,
    m: *const usize,
    len: usize,
    out: *mut f64,
) -> SfStatus {
    guard(|| {
        let e = &handle(e, "engine")?.inner;
        let v = e.joint_moment(input(m, len, "m")?)?;
        *output(out, 1, "out")?.first_mut().unwrap() = v;
        Ok(())
    })
}

/// `E nu(state)^order`.
#[no_mangle]
pub unsafe extern "C" fn sf_moment_engine_marginal(
    e: *const SfMomentEngine,
    state: usize,
    order: u32,
    out: *mut f64,
) -> SfStatus {
    guard(|| {
        let e = &handle(e, "engine")?.inner;
        let v = e.marginal_moment(state, order)?;
        *output(out, 1, "out")?.first_mut().unwrap() = v;
        Ok(())
    })
}

/// The stochastic kernel for moment step `j`, `k * k` row-major.
#[no_mangle]
pub unsafe extern "C" fn sf_moment_engine_kernel(
    e: *const SfMomentEngine,
    j: u32,
    out: *mut f64,
    len: usize,
) -> SfStatus {
    guard(|| {
        let e = &handle(e, "engine")?.inner;
        let flat: Vec<f64> = e.moment_kernel(j)?.rows().concat();
        copy_out(&flat, output(out, len, "out")?)
    })
}

/// Occupation measure of one replicate of the inhomogeneous chain after `n`
/// steps. `cutoff = 0` picks the default. Replicate `r` of seed `s` matches
/// replicate `r` of the command line tool.
#[no_mangle]
pub unsafe extern "C" fn sf_simulate_occupation(
    g: *const SfGenerator,
    cutoff: u64,
    pi: *const f64,
    pi_len: usize,
    n: usize,
    seed: u64,
    replicate: u64,
    out: *mut f64,
    out_len: usize,
) -> SfStatus {
    guard(|| {
        let g = &handle(g, "generator")?.inner;
        let pi = input(pi, pi_len, "pi")?.to_vec();
        let spec = InhomSpec::new(g.clone(), (cutoff > 0).then_some(cutoff), pi, n)?;
        let counts = simulate_counts_with(&spec, &mut rng::stream(seed, replicate));
        copy_out(&counts.measure().masses, output(out, out_len, "out")?)
    })
}

/// GEM(theta) weights until the remainder drops below `eps`. `out_len`
/// receives the number of weights even when `cap` is too small.
#[no_mangle]
pub unsafe extern "C" fn sf_sample_gem(
    theta: f64,
    eps: f64,
    seed: u64,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
    tail_mass: *mut f64,
) -> SfStatus {
    guard(|| {
        if out_len.is_null() {
            return Err(Fail::null("out_len"));
        }
        let stick = sample_stick(&FractionLaw::Gem { theta }, seed, eps)?;
        *out_len = stick.len();
        if let Some(t) = tail_mass.as_mut() {
            *t = stick.tail_mass();
        }
        copy_out(stick.weights(), output(out, cap, "out")?)
    })
}

/// Covariance of the two clumped fractions of GEM(1/2, 1) weights along a
/// two-state chain that stays with probability `p_stay`.
#[no_mangle]
pub unsafe extern "C" fn sf_gem2_clump_covariance(p_stay: f64, terms: usize, out: *mut f64) -> SfStatus {
    guard(|| {
        let c = gem2_clump_covariance(p_stay, terms)?;
        *output(out, 1, "out")?.first_mut().unwrap() = c.cov;
        Ok(())
    })
}
