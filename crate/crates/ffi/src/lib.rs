//! C ABI for building a conversion operator and applying it.
//!
//! Every function returns an [`ApscastStatus`]. On failure a description is
//! kept per thread and can be read with [`apscast_last_error`]. Panics never
//! cross the boundary; they are reported as `APSCAST_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use apscast::experiments::{PipelineConfig, Regime};
use apscast::{Error, HermitianToeplitzCov, PinvSpec, SupportSet, UlaConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApscastStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A numerical consistency check failed.
    Numerical = 3,
    /// An output buffer has the wrong length.
    BufferSize = 4,
    Panic = 5,
}

/// Uniform linear array. Frequencies in Hz, spacing in meters, speed in m/s.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ApscastArray {
    pub n_antennas: usize,
    pub spacing: f64,
    pub f_up: f64,
    pub f_down: f64,
    pub wave_speed: f64,
}

impl From<ApscastArray> for UlaConfig {
    fn from(a: ApscastArray) -> Self {
        UlaConfig {
            n_antennas: a.n_antennas,
            spacing: a.spacing,
            f_up: a.f_up,
            f_down: a.f_down,
            wave_speed: a.wave_speed,
        }
    }
}

/// Opaque operator handle.
pub struct ApscastConverter {
    regime: Regime,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(ApscastStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Numerical(_) => ApscastStatus::Numerical,
            _ => ApscastStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(ApscastStatus::NullPointer, format!("{name} is null"))
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> ApscastStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ApscastStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ApscastStatus::Panic
        }
    }
}

unsafe fn converter<'a>(h: *const ApscastConverter) -> Result<&'a ApscastConverter, Fail> {
    h.as_ref().ok_or_else(|| null("converter"))
}

unsafe fn input<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(got: usize, want: usize, name: &str) -> Result<(), Fail> {
    if got != want {
        return Err(Fail(ApscastStatus::BufferSize, format!("{name} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn apscast_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Fills `out` with the 30-antenna reference array.
///
/// # Safety
/// `out` must be null or point to writable memory for one `ApscastArray`.
#[no_mangle]
pub unsafe extern "C" fn apscast_reference_array(out: *mut ApscastArray) -> ApscastStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = UlaConfig::table1();
        *out = ApscastArray {
            n_antennas: c.n_antennas,
            spacing: c.spacing,
            f_up: c.f_up,
            f_down: c.f_down,
            wave_speed: c.wave_speed,
        };
        Ok(())
    })
}

/// Builds the operator for `array`. `support` holds `n_intervals` pairs
/// `[a, b]` in radians (null when `n_intervals` is 0, meaning no support
/// information). `rel_cutoff <= 0` selects the default pseudo-inverse cutoff.
/// On success `*out` owns a handle to release with [`apscast_converter_free`].
///
/// # Safety
/// `array` and `out` must be valid pointers; `support` must hold
/// `2 * n_intervals` doubles.
#[no_mangle]
pub unsafe extern "C" fn apscast_converter_new(
    array: *const ApscastArray,
    support: *const f64,
    n_intervals: usize,
    rel_cutoff: f64,
    out: *mut *mut ApscastConverter,
) -> ApscastStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let array = array.as_ref().ok_or_else(|| null("array"))?;
        let pairs = input(support, 2 * n_intervals, "support")?;
        let support =
            if n_intervals == 0 { None } else { Some(SupportSet::new(pairs.chunks(2).map(|c| (c[0], c[1])))?) };
        let mut cfg = PipelineConfig::table1(support);
        cfg.array = (*array).into();
        if rel_cutoff > 0.0 {
            cfg.pinv = PinvSpec { rel_cutoff };
        }
        cfg.pinv.validate()?;
        let regime = Regime::build(&cfg, cfg.support.as_ref())?;
        *out = Box::into_raw(Box::new(ApscastConverter { regime }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must be null or come from [`apscast_converter_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn apscast_converter_free(h: *mut ApscastConverter) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of antennas `N`; covariance first columns have `N` entries and the
/// operator matrix is `2N x 2N`.
///
/// # Safety
/// `h` must be a live handle and `n` writable.
#[no_mangle]
pub unsafe extern "C" fn apscast_converter_dim(h: *const ApscastConverter, n: *mut usize) -> ApscastStatus {
    guard(|| {
        let c = converter(h)?;
        *n.as_mut().ok_or_else(|| null("n"))? = c.regime.op.n;
        Ok(())
    })
}

/// Numerical rank of the Gram matrix.
///
/// # Safety
/// `h` must be a live handle and `rank` writable.
#[no_mangle]
pub unsafe extern "C" fn apscast_converter_rank(h: *const ApscastConverter, rank: *mut usize) -> ApscastStatus {
    guard(|| {
        let c = converter(h)?;
        *rank.as_mut().ok_or_else(|| null("rank"))? = c.regime.op.rank;
        Ok(())
    })
}

/// Converts the first column of an uplink covariance (`n` real and `n`
/// imaginary parts) into the downlink first column.
///
/// # Safety
/// All four arrays must hold `n` doubles; outputs must not alias inputs.
#[no_mangle]
pub unsafe extern "C" fn apscast_convert(
    h: *const ApscastConverter,
    up_re: *const f64,
    up_im: *const f64,
    n: usize,
    down_re: *mut f64,
    down_im: *mut f64,
) -> ApscastStatus {
    guard(|| {
        let c = converter(h)?;
        check_len(n, c.regime.op.n, "covariance column")?;
        let cov = HermitianToeplitzCov::from_parts(input(up_re, n, "up_re")?, input(up_im, n, "up_im")?)?;
        let out = apscast::convert(&c.regime.op, &cov)?;
        let (re, im) = (output(down_re, n, "down_re")?, output(down_im, n, "down_im")?);
        for (k, v) in out.first_col().iter().enumerate() {
            re[k] = v.re;
            im[k] = v.im;
        }
        Ok(())
    })
}

/// Copies the `2N x 2N` operator matrix, row-major, into `out` of length `len`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn apscast_converter_matrix(
    h: *const ApscastConverter,
    out: *mut f64,
    len: usize,
) -> ApscastStatus {
    guard(|| {
        let c = converter(h)?;
        let a = &c.regime.op.a;
        check_len(len, a.len(), "matrix buffer")?;
        let out = output(out, len, "out")?;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                out[i * a.ncols() + j] = a[(i, j)];
            }
        }
        Ok(())
    })
}

/// Per-slot residuals and minimum-norm bounds for a spectrum-norm bound `b`.
/// Both buffers have `len = 2N` entries; slot `k < N` is the real part of
/// lag `k`, slot `N + k` its imaginary part.
///
/// # Safety
/// `residual` and `bound` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn apscast_converter_bounds(
    h: *const ApscastConverter,
    b: f64,
    residual: *mut f64,
    bound: *mut f64,
    len: usize,
) -> ApscastStatus {
    guard(|| {
        let c = converter(h)?;
        let report = c.regime.bounds.rescaled(b)?;
        check_len(len, report.per_k.len(), "bound buffers")?;
        let (res, bnd) = (output(residual, len, "residual")?, output(bound, len, "bound")?);
        for (k, e) in report.per_k.iter().enumerate() {
            res[k] = e.residual;
            bnd[k] = e.bound_pv0;
        }
        Ok(())
    })
}
