//! C ABI over the qlab core.
//!
//! Every function returns a [`QlabStatus`]; results go through out-pointers.
//! On failure the message is kept in a thread-local slot readable with
//! [`qlab_last_error`]. Panics never cross the boundary: they are caught and
//! reported as [`QlabStatus::Panic`].
//!
//! Models and sample pools are opaque handles owned by the caller and
//! released with their `_free` function. Strings returned by the library are
//! released with [`qlab_string_free`].
//!
//! Gradient outputs use caller buffers: `*out_len` always receives the
//! required length, and a buffer shorter than that yields
//! [`QlabStatus::BufferTooSmall`] with the buffer untouched.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qlab::estimators::{garl_plugin, garl_rloo, paft, EstimatorOutput, SamplePool};
use qlab::models::{
    exact_grad_loss, read_model, sample_prior, write_model, AnyModel, Example, LatentDims,
    LatentSeqModel, Model,
};
use qlab::rng::Stream;
use qlab::{Error, QParam, SimplexPoint, SuccessProb};

/// Result codes. Zero is success; every other value has a message in
/// [`qlab_last_error`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QlabStatus {
    Ok = 0,
    NullPointer = 1,
    /// q outside [0, 1], probability outside (0, 1], bad simplex or shape.
    InvalidArgument = 2,
    /// Loss or gradient requested at success probability zero.
    ColdZero = 3,
    /// Every weight in a pool underflows.
    DegeneratePool = 4,
    /// Latent space larger than the enumeration cap.
    EnumerationCap = 5,
    Numerical = 6,
    Parse = 7,
    Io = 8,
    BufferTooSmall = 9,
    /// The operation needs a latent-sequence model.
    WrongModelKind = 10,
    Panic = 99,
}

/// Opaque model handle.
pub struct QlabModel {
    inner: AnyModel,
}

/// Opaque sample pool handle, tied to the model and example it was drawn from.
pub struct QlabPool {
    inner: SamplePool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QlabStatus {
    match e {
        Error::QOutOfRange(_)
        | Error::ProbabilityDomain(_)
        | Error::Simplex(_)
        | Error::Domain(_)
        | Error::Empty(_)
        | Error::Shape(_)
        | Error::PoolTooSmall { .. }
        | Error::InsufficientGrid(_)
        | Error::Config(_) => QlabStatus::InvalidArgument,
        Error::ColdZero(_) => QlabStatus::ColdZero,
        Error::DegeneratePool(_) | Error::ParticleDegeneracy(_) => QlabStatus::DegeneratePool,
        Error::EnumerationCap { .. } => QlabStatus::EnumerationCap,
        Error::Numerical(_) | Error::UnreachableTarget { .. } => QlabStatus::Numerical,
        Error::Parse(_) => QlabStatus::Parse,
        Error::Io(_) => QlabStatus::Io,
    }
}

struct Fail(QlabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type Res<T> = Result<T, Fail>;

fn null(what: &str) -> Fail {
    Fail(QlabStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, record any failure and translate it into a status.
fn guard(f: impl FnOnce() -> Res<()>) -> QlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QlabStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            QlabStatus::Panic
        }
    }
}

fn put<T>(out: *mut T, v: T, what: &str) -> Res<()> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per the API contract, valid for writes.
    unsafe { out.write(v) };
    Ok(())
}

/// # Safety
/// `p` must be null or point to `n` readable values.
unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Res<&'a [T]> {
    match (p.is_null(), n) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(null(what)),
        (false, _) => Ok(std::slice::from_raw_parts(p, n)),
    }
}

/// # Safety
/// `p` must be null or a live handle from this library.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `s` must be null or a nul-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Res<&'a str> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| Fail(QlabStatus::InvalidArgument, format!("{what}: {e}")))
}

fn write_buf(values: &[f64], out: *mut f64, cap: usize, out_len: *mut usize) -> Res<()> {
    put(out_len, values.len(), "out_len")?;
    if cap < values.len() {
        return Err(Fail(
            QlabStatus::BufferTooSmall,
            format!("buffer holds {cap} values, need {}", values.len()),
        ));
    }
    if values.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    // SAFETY: `out` is non-null and the caller promised `cap >= len` slots.
    unsafe { ptr::copy_nonoverlapping(values.as_ptr(), out, values.len()) };
    Ok(())
}

/// # Safety
/// `target` must point to `target_len` values.
unsafe fn example(input: usize, target: *const usize, target_len: usize) -> Res<Example> {
    Ok(Example::new(
        input,
        slice(target, target_len, "target")?.to_vec(),
    ))
}

fn latent(m: &QlabModel) -> Res<&LatentSeqModel> {
    match &m.inner {
        AnyModel::Latent(l) => Ok(l),
        other => Err(Fail(
            QlabStatus::WrongModelKind,
            format!("need a latent model, got {}", other.kind()),
        )),
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn qlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn qlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `ln_q(u)`, reducing to `ln u` at q = 1.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_q_log(u: f64, q: f64, out: *mut f64) -> QlabStatus {
    guard(|| put(out, qlab::qcore::q_log(u, QParam::new(q)?)?, "out"))
}

/// Per-example loss `-ln_q(p)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_loss(p: f64, q: f64, out: *mut f64) -> QlabStatus {
    guard(|| {
        put(
            out,
            qlab::qcore::loss_q(SuccessProb::new(p)?, QParam::new(q)?)?,
            "out",
        )
    })
}

/// Escort minimizer of the categorical objective; writes `n` weights to `out`.
///
/// # Safety
/// `alpha` must point to `n` values and `out` to `n` writable slots.
#[no_mangle]
pub unsafe extern "C" fn qlab_escort(
    alpha: *const f64,
    n: usize,
    q: f64,
    out: *mut f64,
) -> QlabStatus {
    guard(|| {
        let a = SimplexPoint::new(slice(alpha, n, "alpha")?.to_vec())?;
        let theta = qlab::qcore::escort_minimizer(&a, QParam::new(q)?)?;
        let mut len = 0;
        write_buf(theta.weights(), out, n, &mut len)
    })
}

/// Time for the one-parameter sigmoid flow to lift success probability from
/// `p0` to `delta`, by quadrature.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_sigmoid_escape_time(
    q: f64,
    p0: f64,
    delta: f64,
    out: *mut f64,
) -> QlabStatus {
    guard(|| {
        let t = qlab::dynamics::exact_sigmoid_time(
            QParam::new(q)?,
            SuccessProb::new(p0)?,
            SuccessProb::new(delta)?,
        )?;
        put(out, t, "out")
    })
}

/// Parse a model from its text form.
///
/// # Safety
/// `s` must be a nul-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_model_from_str(
    s: *const c_char,
    out: *mut *mut QlabModel,
) -> QlabStatus {
    guard(|| {
        let m = read_model(text(s, "s")?)?;
        put(out, Box::into_raw(Box::new(QlabModel { inner: m })), "out")
    })
}

/// Load a model file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_model_load(
    path: *const c_char,
    out: *mut *mut QlabModel,
) -> QlabStatus {
    guard(|| {
        let m = qlab::models::load_model(std::path::Path::new(text(path, "path")?))?;
        put(out, Box::into_raw(Box::new(QlabModel { inner: m })), "out")
    })
}

/// Random latent-sequence model. `dims` holds n_inputs, latent_vocab,
/// latent_len, output_vocab and output_len; logits are uniform in
/// `[-scale, scale]`.
///
/// # Safety
/// `dims` must point to 5 values and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_model_random(
    dims: *const usize,
    scale: f64,
    seed: u64,
    out: *mut *mut QlabModel,
) -> QlabStatus {
    guard(|| {
        let &[n_inputs, latent_vocab, latent_len, output_vocab, output_len] =
            slice(dims, 5, "dims")?
        else {
            unreachable!("slice of length 5")
        };
        let d = LatentDims {
            n_inputs,
            latent_vocab,
            latent_len,
            output_vocab,
            output_len,
        };
        let m = LatentSeqModel::random(d, scale, &mut Stream::new(seed))?;
        put(
            out,
            Box::into_raw(Box::new(QlabModel {
                inner: AnyModel::Latent(m),
            })),
            "out",
        )
    })
}

/// Release a model; null is ignored.
///
/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qlab_model_free(m: *mut QlabModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_model_num_params(m: *const QlabModel, out: *mut usize) -> QlabStatus {
    guard(|| put(out, handle(m, "model")?.inner.num_params(), "out"))
}

/// Exact `log P(target | input)`.
///
/// # Safety
/// `m` must be a live handle, `target` point to `target_len` values and
/// `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_model_log_marginal(
    m: *const QlabModel,
    input: usize,
    target: *const usize,
    target_len: usize,
    out: *mut f64,
) -> QlabStatus {
    guard(|| {
        let ex = example(input, target, target_len)?;
        put(out, handle(m, "model")?.inner.log_marginal(&ex)?, "out")
    })
}

/// Exact gradient of the per-example loss at `q`.
///
/// # Safety
/// `m` must be a live handle, `target` point to `target_len` values, `out`
/// to `cap` writable slots and `out_len` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_model_grad_loss(
    m: *const QlabModel,
    input: usize,
    target: *const usize,
    target_len: usize,
    q: f64,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> QlabStatus {
    guard(|| {
        let ex = example(input, target, target_len)?;
        let g = exact_grad_loss(&handle(m, "model")?.inner, &ex, QParam::new(q)?)?;
        write_buf(&g.values, out, cap, out_len)
    })
}

/// Text form of a model; release with [`qlab_string_free`].
///
/// # Safety
/// `m` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_model_to_string(
    m: *const QlabModel,
    out: *mut *mut c_char,
) -> QlabStatus {
    guard(|| {
        let s =
            CString::new(write_model(&handle(m, "model")?.inner)).expect("model text has no nul");
        put(out, s.into_raw(), "out")
    })
}

/// Release a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Draw `m_size` latents from the prior of a latent model and score them
/// against the example. The same seed gives the same pool.
///
/// # Safety
/// `m` must be a live handle, `target` point to `target_len` values and
/// `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_pool_sample(
    m: *const QlabModel,
    input: usize,
    target: *const usize,
    target_len: usize,
    m_size: usize,
    seed: u64,
    out: *mut *mut QlabPool,
) -> QlabStatus {
    guard(|| {
        let ex = example(input, target, target_len)?;
        let pool = sample_prior(
            latent(handle(m, "model")?)?,
            &ex,
            m_size,
            &mut Stream::new(seed),
        )?;
        put(
            out,
            Box::into_raw(Box::new(QlabPool { inner: pool })),
            "out",
        )
    })
}

/// Release a pool; null is ignored.
///
/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qlab_pool_free(p: *mut QlabPool) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Effective sample size of the pool's likelihood weights, in `[1, M]`.
///
/// # Safety
/// `p` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_pool_ess(p: *const QlabPool, out: *mut f64) -> QlabStatus {
    guard(|| put(out, handle(p, "pool")?.inner.ess(), "out"))
}

fn emit(
    est: EstimatorOutput,
    normalized: bool,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> Res<()> {
    let est = if normalized { est.normalized() } else { est };
    write_buf(est.values(), out, cap, out_len)
}

/// Plug-in gradient estimate; `normalized` applies the `1/M^q` rescale.
///
/// # Safety
/// `p` must be a live handle, `out` point to `cap` writable slots and
/// `out_len` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qlab_garl_plugin(
    p: *const QlabPool,
    q: f64,
    normalized: bool,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> QlabStatus {
    guard(|| {
        emit(
            garl_plugin(&handle(p, "pool")?.inner, QParam::new(q)?)?,
            normalized,
            out,
            cap,
            out_len,
        )
    })
}

/// Leave-one-out gradient estimate; `normalized` applies the `1/M^q` rescale.
///
/// # Safety
/// As for [`qlab_garl_plugin`].
#[no_mangle]
pub unsafe extern "C" fn qlab_garl_rloo(
    p: *const QlabPool,
    q: f64,
    normalized: bool,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> QlabStatus {
    guard(|| {
        emit(
            garl_rloo(&handle(p, "pool")?.inner, QParam::new(q)?)?,
            normalized,
            out,
            cap,
            out_len,
        )
    })
}

/// Posterior-resampled estimate with `k` draws (`k = 0` means `M`).
///
/// # Safety
/// As for [`qlab_garl_plugin`].
#[no_mangle]
pub unsafe extern "C" fn qlab_paft(
    p: *const QlabPool,
    q: f64,
    k: usize,
    seed: u64,
    normalized: bool,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> QlabStatus {
    guard(|| {
        let pool = &handle(p, "pool")?.inner;
        let k = if k == 0 { pool.m() } else { k };
        emit(
            paft(pool, QParam::new(q)?, k, &mut Stream::new(seed))?,
            normalized,
            out,
            cap,
            out_len,
        )
    })
}
