//! C interface to trained DeepPCANet models.
//!
//! Models are opaque `DpcnModel` handles created by `dpcn_model_load*` and released
//! with `dpcn_model_free`. Every fallible call returns a `DpcnStatus`; on failure the
//! message is available from `dpcn_last_error_message` on the same thread. Images are
//! passed as `f64` arrays in `N × H × W × C` order with values in `[0, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use deeppcanet::dataset::LabeledImage;
use deeppcanet::evaluation::grad_cam;
use deeppcanet::image::Image;
use deeppcanet::netbuilder::trace_ratio;
use deeppcanet::nn::{checkpoint_load, checkpoint_save, ModelState, Tensor};
use deeppcanet::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpcnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    BufferTooSmall = 6,
    Panic = 7,
    Internal = 8,
}

/// Opaque model handle.
pub struct DpcnModel {
    inner: ModelState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> DpcnStatus {
    match err {
        Error::Io { .. } => DpcnStatus::Io,
        Error::Format(_) | Error::Checkpoint(_) | Error::Json(_) => DpcnStatus::Format,
        Error::Shape { .. } => DpcnStatus::Shape,
        Error::InvalidInput(_) | Error::NoSamples | Error::SingleClass | Error::NoForeground => {
            DpcnStatus::InvalidArgument
        }
        _ => DpcnStatus::Internal,
    }
}

struct Failure(DpcnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: DpcnStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DpcnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DpcnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DpcnStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(model: *const DpcnModel) -> Result<&'a ModelState, Failure> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| fail(DpcnStatus::NullPointer, "model handle is null"))
}

unsafe fn input_slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail(DpcnStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output_slice<'a>(ptr: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(fail(DpcnStatus::NullPointer, format!("{what} is null")));
    }
    if len < need {
        return Err(fail(DpcnStatus::BufferTooSmall, format!("{what} holds {len} values, {need} needed")));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return Err(fail(DpcnStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| fail(DpcnStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

fn store_model(model: ModelState, out: *mut *mut DpcnModel) {
    let boxed = Box::new(DpcnModel { inner: model });
    // SAFETY: callers check `out` for null before building the model
    unsafe { *out = Box::into_raw(boxed) };
}

/// Loads a DPCN checkpoint file. On success `*out` receives a handle that must be
/// released with `dpcn_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpcn_model_load(path: *const c_char, out: *mut *mut DpcnModel) -> DpcnStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(DpcnStatus::NullPointer, "out is null"));
        }
        let path = path_arg(path)?;
        let bytes = std::fs::read(path).map_err(|e| fail(DpcnStatus::Io, format!("{}: {e}", path.display())))?;
        store_model(checkpoint_load(&bytes)?, out);
        Ok(())
    })
}

/// Loads a checkpoint from memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpcn_model_load_bytes(data: *const u8, len: usize, out: *mut *mut DpcnModel) -> DpcnStatus {
    guard(|| {
        if out.is_null() || (data.is_null() && len > 0) {
            return Err(fail(DpcnStatus::NullPointer, "data or out is null"));
        }
        let bytes = if len == 0 { &[][..] } else { slice::from_raw_parts(data, len) };
        store_model(checkpoint_load(bytes)?, out);
        Ok(())
    })
}

/// Writes the model as a DPCN checkpoint file.
///
/// # Safety
/// `model` must come from `dpcn_model_load*`; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dpcn_model_save(model: *const DpcnModel, path: *const c_char) -> DpcnStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = path_arg(path)?;
        std::fs::write(path, checkpoint_save(m)).map_err(|e| fail(DpcnStatus::Io, format!("{}: {e}", path.display())))
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from `dpcn_model_load*` and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn dpcn_model_free(model: *mut DpcnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input height, width and channels.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dpcn_model_input_shape(
    model: *const DpcnModel,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> DpcnStatus {
    guard(|| {
        let m = model_ref(model)?;
        if height.is_null() || width.is_null() || channels.is_null() {
            return Err(fail(DpcnStatus::NullPointer, "output pointer is null"));
        }
        let [h, w, c] = m.arch().input;
        *height = h;
        *width = w;
        *channels = c;
        Ok(())
    })
}

/// Number of output classes.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dpcn_model_num_classes(model: *const DpcnModel, out: *mut usize) -> DpcnStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(fail(DpcnStatus::NullPointer, "out is null"));
        }
        *out = m.num_classes();
        Ok(())
    })
}

/// Number of conv blocks.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dpcn_model_depth(model: *const DpcnModel, out: *mut usize) -> DpcnStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(fail(DpcnStatus::NullPointer, "out is null"));
        }
        *out = m.arch().depth();
        Ok(())
    })
}

/// Class probabilities for `batch` images. `pixels` holds `batch·H·W·C` values and
/// `probs` receives `batch·classes` values, row per image.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn dpcn_model_predict(
    model: *const DpcnModel,
    pixels: *const f64,
    batch: usize,
    probs: *mut f64,
    probs_len: usize,
) -> DpcnStatus {
    guard(|| {
        let m = model_ref(model)?;
        if batch == 0 {
            return Err(fail(DpcnStatus::InvalidArgument, "batch must be >= 1"));
        }
        let [h, w, c] = m.arch().input;
        let x = input_slice(pixels, batch * h * w * c, "pixels")?;
        let out = output_slice(probs, probs_len, batch * m.num_classes(), "probs")?;
        let t = Tensor::new([batch, h, w, c], x.to_vec())?;
        let p = m.predict(&t)?;
        out[..p.data().len()].copy_from_slice(p.data());
        Ok(())
    })
}

/// Grad-CAM heatmap (`H·W` values in `[0, 1]`) for one image and target class.
///
/// # Safety
/// `pixels` must hold `H·W·C` values and `heatmap` at least `heatmap_len` values.
#[no_mangle]
pub unsafe extern "C" fn dpcn_model_grad_cam(
    model: *const DpcnModel,
    pixels: *const f64,
    target_class: usize,
    heatmap: *mut f64,
    heatmap_len: usize,
) -> DpcnStatus {
    guard(|| {
        let m = model_ref(model)?;
        let [h, w, c] = m.arch().input;
        let x = input_slice(pixels, h * w * c, "pixels")?;
        let out = output_slice(heatmap, heatmap_len, h * w, "heatmap")?;
        let img = LabeledImage::new(Image::new(h, w, c, x.to_vec())?, 0, "input")?;
        let map = grad_cam(m, &img, target_class)?;
        out[..map.values.len()].copy_from_slice(&map.values);
        Ok(())
    })
}

/// Between/within-class trace ratio of `n` feature vectors of length `dim`
/// (row-major) with class labels.
///
/// # Safety
/// `features` must hold `n·dim` values, `labels` `n` values, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dpcn_trace_ratio(
    features: *const f64,
    n: usize,
    dim: usize,
    labels: *const usize,
    out: *mut f64,
) -> DpcnStatus {
    guard(|| {
        if out.is_null() || (labels.is_null() && n > 0) {
            return Err(fail(DpcnStatus::NullPointer, "labels or out is null"));
        }
        let f = input_slice(features, n * dim, "features")?;
        let y = if n == 0 { &[][..] } else { slice::from_raw_parts(labels, n) };
        let rows: Vec<&[f64]> = if dim == 0 { vec![&[][..]; n] } else { f.chunks_exact(dim).collect() };
        *out = trace_ratio(&rows, y)?.tr;
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to fit) and returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null with `len` 0.
#[no_mangle]
pub unsafe extern "C" fn dpcn_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn dpcn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
