//! C interface to voxembed.
//!
//! Models are opaque [`VxModel`] handles from [`vx_model_load`], released
//! with [`vx_model_free`]. Every fallible function returns a [`VxStatus`];
//! on failure the message is available from [`vx_last_error`] on the same
//! thread. Output buffers are caller-allocated, and no function keeps a
//! pointer it was given after returning.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use voxembed::eval::{compute_eer, Label};
use voxembed::frontend::{featurize, FbankConfig, FeatureMatrix, VadConfig, Waveform};
use voxembed::model::{forward_embed, load_checkpoint, ModelParams};
use voxembed::nn::cosine_similarity;
use voxembed::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Dimension = 5,
    InsufficientInput = 6,
    Degenerate = 7,
    Internal = 99,
}

/// A loaded embedding model.
pub struct VxModel {
    params: ModelParams<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> VxStatus {
    match e {
        Error::Io { .. } | Error::MissingArtifact { .. } => VxStatus::Io,
        Error::Checkpoint(_) | Error::Integrity(_) | Error::ArchMismatch { .. } | Error::Json(_) => VxStatus::Checkpoint,
        Error::Dimension { .. } => VxStatus::Dimension,
        Error::EmptyUtterance(_) | Error::InsufficientFrames { .. } => VxStatus::InsufficientInput,
        Error::DegenerateEmbedding { .. } | Error::DegenerateFusion { .. } | Error::SingleClass(_) | Error::ZeroVariance => {
            VxStatus::Degenerate
        }
        _ => VxStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic for [`vx_last_error`].
fn guard(f: impl FnOnce() -> Result<(), VxStatus>) -> VxStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VxStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            VxStatus::Internal
        }
    }
}

fn fail(e: Error) -> VxStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn invalid(msg: &str) -> VxStatus {
    set_error(msg);
    VxStatus::InvalidArgument
}

/// # Safety
/// `ptr` must be valid for `len` reads when non-null.
unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Result<&'a [T], VxStatus> {
    if ptr.is_null() {
        set_error("null input pointer");
        return Err(VxStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be valid for `len` writes when non-null.
unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize) -> Result<&'a mut [T], VxStatus> {
    if ptr.is_null() {
        set_error("null output pointer");
        return Err(VxStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// # Safety
/// `model` must be null or a live handle from [`vx_model_load`].
unsafe fn model_ref<'a>(model: *const VxModel) -> Result<&'a VxModel, VxStatus> {
    model.as_ref().ok_or_else(|| {
        set_error("null model handle");
        VxStatus::NullPointer
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated) and returns the full message length, or 0 if the
/// last call succeeded.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn vx_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Loads a checkpoint. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vx_model_load(path: *const c_char, out: *mut *mut VxModel) -> VxStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            set_error("null path or output handle");
            return Err(VxStatus::NullPointer);
        }
        *out = std::ptr::null_mut();
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let params = load_checkpoint(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(VxModel { params }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`vx_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vx_model_free(model: *mut VxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vx_model_embed_dim(model: *const VxModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.arch.embed_dim)
}

/// Fewest feature frames the model accepts, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vx_model_min_frames(model: *const VxModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.arch.min_frames())
}

/// Log-mel input dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vx_model_feature_dim(model: *const VxModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.arch.input_freq)
}

fn embed_into(model: &VxModel, feat: &FeatureMatrix, out: &mut [f32]) -> Result<(), VxStatus> {
    if out.len() != model.params.arch.embed_dim {
        return Err(invalid(&format!(
            "output holds {} floats, embedding has {}",
            out.len(),
            model.params.arch.embed_dim
        )));
    }
    let e = forward_embed(&model.params, feat).map_err(fail)?;
    out.copy_from_slice(e.vector());
    Ok(())
}

/// Embeds a row-major `frames x dim` matrix of normalized log-mel features
/// into `out[0..out_len]`; `out_len` must equal the embedding dimension.
///
/// # Safety
/// `feats` must be valid for `frames * dim` reads and `out` for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn vx_model_embed_features(
    model: *const VxModel,
    feats: *const f32,
    frames: usize,
    dim: usize,
    out: *mut f32,
    out_len: usize,
) -> VxStatus {
    guard(|| {
        let model = model_ref(model)?;
        let len = frames.checked_mul(dim).ok_or_else(|| invalid("frames * dim overflows"))?;
        let data = slice(feats, len)?.to_vec();
        let feat = FeatureMatrix::new("ffi", "", 10.0, dim, data).map_err(fail)?;
        embed_into(model, &feat, slice_mut(out, out_len)?)
    })
}

/// Runs the default frontend (log-mel, energy VAD, CMVN) on mono samples in
/// `[-1, 1]` and embeds the result.
///
/// # Safety
/// `samples` must be valid for `n` reads and `out` for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn vx_model_embed_audio(
    model: *const VxModel,
    samples: *const f32,
    n: usize,
    sample_rate: u32,
    out: *mut f32,
    out_len: usize,
) -> VxStatus {
    guard(|| {
        let model = model_ref(model)?;
        let wave = Waveform::new(slice(samples, n)?.to_vec(), sample_rate).map_err(fail)?;
        let feat = featurize(&wave, "ffi", "", &FbankConfig::default(), &VadConfig::default()).map_err(fail)?;
        embed_into(model, &feat, slice_mut(out, out_len)?)
    })
}

/// Cosine similarity of two unit-norm vectors of length `dim`.
///
/// # Safety
/// `a` and `b` must be valid for `dim` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn vx_cosine(a: *const f32, b: *const f32, dim: usize, out: *mut f64) -> VxStatus {
    guard(|| {
        let s = cosine_similarity(slice(a, dim)?, slice(b, dim)?).map_err(fail)?;
        *slice_mut(out, 1)?.first_mut().expect("one slot") = s;
        Ok(())
    })
}

/// Equal error rate in percent and its threshold. `labels[i]` is 1 for a
/// target trial and 0 for a nontarget.
///
/// # Safety
/// `scores` and `labels` must be valid for `n` reads; `eer` and `threshold`
/// for one write each (`threshold` may be null).
#[no_mangle]
pub unsafe extern "C" fn vx_eer(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    eer: *mut f64,
    threshold: *mut f64,
) -> VxStatus {
    guard(|| {
        let labels = slice(labels, n)?
            .iter()
            .map(|&l| match l {
                0 => Ok(Label::Nontarget),
                1 => Ok(Label::Target),
                _ => Err(invalid("labels must be 0 or 1")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let r = compute_eer(slice(scores, n)?, &labels).map_err(fail)?;
        slice_mut(eer, 1)?[0] = r.eer;
        if !threshold.is_null() {
            *threshold = r.threshold;
        }
        Ok(())
    })
}
