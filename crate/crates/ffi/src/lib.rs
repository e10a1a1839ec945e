//! C ABI over the `spectral_ada` library.
//!
//! Every fallible function returns an [`SdaStatus`]. On failure the message
//! is kept per thread and can be copied out with [`sda_last_error_message`].
//! Images and heads cross the boundary as opaque handles that the caller
//! releases with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use spectral_ada::calibration::{ece, PredictionLog};
use spectral_ada::margin::{margin_score, query_score};
use spectral_ada::spectral::{fda_transfer, low_freq_mask};
use spectral_ada::{netpbm, Error, ErrorKind, Image, LinearHead, MarginParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdaStatus {
    Ok = 0,
    NullPointer = 1,
    MalformedInput = 2,
    InvariantViolation = 3,
    Io = 4,
    BufferTooSmall = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

/// Opaque image handle.
pub struct SdaImage(Image);

/// Opaque linear classification head.
pub struct SdaHead(LinearHead);

/// Query score of one sample.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdaQueryRecord {
    pub margin_score: f64,
    pub cosine_term: f64,
    pub q_value: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> SdaStatus {
    match err.kind() {
        ErrorKind::MalformedInput => SdaStatus::MalformedInput,
        ErrorKind::InvariantViolation => SdaStatus::InvariantViolation,
        ErrorKind::Io => SdaStatus::Io,
    }
}

struct Failure(SdaStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SdaStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SdaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            SdaStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn path_in(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(SdaStatus::InvalidUtf8, "path is not valid UTF-8".into()))
}

unsafe fn image_ref<'a>(p: *const SdaImage) -> Result<&'a Image, Failure> {
    p.as_ref().map(|h| &h.0).ok_or_else(|| null("image"))
}

unsafe fn head_ref<'a>(p: *const SdaHead) -> Result<&'a LinearHead, Failure> {
    p.as_ref().map(|h| &h.0).ok_or_else(|| null("head"))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_scalar<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output"));
    }
    *out = value;
    Ok(())
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the buffer size
/// needed for the full message, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sda_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Creates an image from `height * width * channels` interleaved values.
///
/// # Safety
/// `data` must point to that many readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sda_image_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f64,
    out: *mut *mut SdaImage,
) -> SdaStatus {
    guard(|| {
        let len = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Failure::from(Error::Overflow("image size")))?;
        let values = slice_in(data, len, "data")?.to_vec();
        store(out, SdaImage(Image::new(height, width, channels, values)?))
    })
}

/// Reads a binary PGM or PPM file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sda_image_read(path: *const c_char, out: *mut *mut SdaImage) -> SdaStatus {
    guard(|| {
        let image = netpbm::read_image(path_in(path)?)?;
        store(out, SdaImage(image))
    })
}

/// Writes a PGM (one channel) or PPM (three channels), clamping to [0, 1].
///
/// # Safety
/// `image` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sda_image_write(image: *const SdaImage, path: *const c_char) -> SdaStatus {
    guard(|| {
        let image = image_ref(image)?;
        netpbm::write_image(&image.clamped(), path_in(path)?)?;
        Ok(())
    })
}

/// Reports the shape of an image.
///
/// # Safety
/// `image` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn sda_image_shape(
    image: *const SdaImage,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> SdaStatus {
    guard(|| {
        let image = image_ref(image)?;
        for (p, v) in [(height, image.height()), (width, image.width()), (channels, image.channels())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the interleaved pixel values into `out`, which must hold at least
/// `height * width * channels` doubles.
///
/// # Safety
/// `image` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sda_image_copy_data(image: *const SdaImage, out: *mut f64, len: usize) -> SdaStatus {
    guard(|| {
        let data = image_ref(image)?.data();
        if len < data.len() {
            return Err(Failure(
                SdaStatus::BufferTooSmall,
                format!("need {} values, buffer holds {len}", data.len()),
            ));
        }
        slice_out(out, data.len(), "out")?.copy_from_slice(data);
        Ok(())
    })
}

/// Releases an image handle. Null is ignored.
///
/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sda_image_free(image: *mut SdaImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Replaces the low-frequency amplitude of `source` with that of `target`.
/// The result is not clamped.
///
/// # Safety
/// `source` and `target` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sda_fda_transfer(
    source: *const SdaImage,
    target: *const SdaImage,
    beta: f64,
    out: *mut *mut SdaImage,
) -> SdaStatus {
    guard(|| {
        let image = fda_transfer(image_ref(source)?, image_ref(target)?, beta)?;
        store(out, SdaImage(image))
    })
}

/// Writes the `height * width` low-frequency mask as 0/1 bytes, row-major.
///
/// # Safety
/// `out` must point to `len` writable bytes; `popcount` may be null.
#[no_mangle]
pub unsafe extern "C" fn sda_low_freq_mask(
    height: usize,
    width: usize,
    beta: f64,
    out: *mut u8,
    len: usize,
    popcount: *mut usize,
) -> SdaStatus {
    guard(|| {
        let mask = low_freq_mask(height, width, beta)?;
        let bits = mask.bits();
        if len < bits.len() {
            return Err(Failure(
                SdaStatus::BufferTooSmall,
                format!("need {} bytes, buffer holds {len}", bits.len()),
            ));
        }
        for (o, &b) in slice_out(out, bits.len(), "out")?.iter_mut().zip(bits) {
            *o = u8::from(b);
        }
        if !popcount.is_null() {
            *popcount = mask.popcount();
        }
        Ok(())
    })
}

/// Creates a head from `classes * dim` row-major weights and `classes` biases.
///
/// # Safety
/// `weights` and `bias` must point to that many readable doubles.
#[no_mangle]
pub unsafe extern "C" fn sda_head_new(
    classes: usize,
    dim: usize,
    weights: *const f64,
    bias: *const f64,
    out: *mut *mut SdaHead,
) -> SdaStatus {
    guard(|| {
        let n = classes
            .checked_mul(dim)
            .ok_or_else(|| Failure::from(Error::Overflow("head size")))?;
        let w = slice_in(weights, n, "weights")?.to_vec();
        let b = slice_in(bias, classes, "bias")?.to_vec();
        store(out, SdaHead(LinearHead::new(classes, dim, w, b)?))
    })
}

/// Loads a head file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sda_head_load(path: *const c_char, out: *mut *mut SdaHead) -> SdaStatus {
    guard(|| {
        let head = LinearHead::load(path_in(path)?)?;
        store(out, SdaHead(head))
    })
}

/// Saves a head file.
///
/// # Safety
/// `head` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sda_head_save(head: *const SdaHead, path: *const c_char) -> SdaStatus {
    guard(|| {
        head_ref(head)?.save(path_in(path)?)?;
        Ok(())
    })
}

/// Reports the number of classes and the feature dimension.
///
/// # Safety
/// `head` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn sda_head_shape(head: *const SdaHead, classes: *mut usize, dim: *mut usize) -> SdaStatus {
    guard(|| {
        let head = head_ref(head)?;
        if !classes.is_null() {
            *classes = head.classes();
        }
        if !dim.is_null() {
            *dim = head.dim();
        }
        Ok(())
    })
}

/// Computes the logits of one feature vector.
///
/// # Safety
/// `features` must hold `dim` doubles and `out` `classes` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sda_head_logits(
    head: *const SdaHead,
    features: *const f64,
    dim: usize,
    out: *mut f64,
    classes: usize,
) -> SdaStatus {
    guard(|| {
        let head = head_ref(head)?;
        if classes != head.classes() {
            return Err(Error::ShapeMismatch(format!(
                "output holds {classes} logits, head has {} classes",
                head.classes()
            ))
            .into());
        }
        let z = head.logits(slice_in(features, dim, "features")?)?;
        slice_out(out, classes, "out")?.copy_from_slice(&z);
        Ok(())
    })
}

/// Releases a head handle. Null is ignored.
///
/// # Safety
/// `head` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sda_head_free(head: *mut SdaHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// Margin score `1 - (p1 - p2)` of a logit vector with at least two classes.
///
/// # Safety
/// `logits` must hold `classes` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sda_margin_score(logits: *const f64, classes: usize, out: *mut f64) -> SdaStatus {
    guard(|| {
        let z = slice_in(logits, classes, "logits")?;
        if classes < 2 {
            return Err(Error::InvalidParameter("margin needs at least two classes".into()).into());
        }
        if let Some(index) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "logits", index }.into());
        }
        write_scalar(out, margin_score(z))
    })
}

/// Query score of one feature vector under margin `m` and weight `lambda`.
///
/// # Safety
/// `features` must hold `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sda_query_score(
    head: *const SdaHead,
    features: *const f64,
    dim: usize,
    m: f64,
    lambda: f64,
    out: *mut SdaQueryRecord,
) -> SdaStatus {
    guard(|| {
        let head = head_ref(head)?;
        let params = MarginParams::new(m, lambda)?;
        let record = query_score(head, slice_in(features, dim, "features")?, &params)?;
        write_scalar(
            out,
            SdaQueryRecord {
                margin_score: record.margin_score,
                cosine_term: record.cosine_term,
                q_value: record.q_value,
            },
        )
    })
}

/// Expected calibration error over `n` predictions with `bins` equal-width bins.
///
/// # Safety
/// `confidence`, `predicted` and `actual` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn sda_ece(
    confidence: *const f64,
    predicted: *const u32,
    actual: *const u32,
    n: usize,
    bins: usize,
    out: *mut f64,
) -> SdaStatus {
    guard(|| {
        let conf = slice_in(confidence, n, "confidence")?.to_vec();
        let widen = |v: &[u32]| v.iter().map(|&x| x as usize).collect::<Vec<_>>();
        let pred = widen(slice_in(predicted, n, "predicted")?);
        let act = widen(slice_in(actual, n, "actual")?);
        let log = PredictionLog::new(conf, pred, act)?;
        write_scalar(out, ece(&log, bins)?)
    })
}
