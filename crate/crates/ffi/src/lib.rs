//! C ABI over `pix2pix-mt`.
//!
//! Every fallible function returns a [`P2pStatus`]. On failure the message
//! is kept per thread and read with [`p2p_last_error`]. Models are opaque
//! handles created by [`p2p_model_load`] and released with
//! [`p2p_model_free`]. Images cross the boundary as 8-bit, row-major
//! buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use image::GrayImage;
use pix2pix_mt::data::{Class, Image, LabelMap};
use pix2pix_mt::metrics::{confusion_areas, dice, jaccard, mssim, rmse};
use pix2pix_mt::models::Task;
use pix2pix_mt::trainer::{infer, load_checkpoint, Checkpoint};
use pix2pix_mt::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum P2pStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Decode = 4,
    Checksum = 5,
    Config = 6,
    Shape = 7,
    Numeric = 8,
    BufferTooSmall = 9,
    Panic = 10,
    Other = 11,
}

/// Output kind of one generator head.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum P2pTask {
    /// Colour-coded mask, 3 bytes (RGB) per pixel.
    Segmentation = 0,
    /// Bone-suppressed radiograph, 1 byte per pixel.
    BoneSuppression = 1,
}

/// A loaded checkpoint ready for inference.
pub struct P2pModel {
    ckpt: Checkpoint,
}

struct Failure(P2pStatus, String);

type Outcome = Result<(), Failure>;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::DuplicateId(_) | Error::MissingPair { .. } => {
                P2pStatus::Config
            }
            Error::Shape(_) => P2pStatus::Shape,
            Error::Numeric(_) => P2pStatus::Numeric,
            Error::Decode { .. } | Error::Json(_) | Error::Csv(_) => P2pStatus::Decode,
            Error::Checksum(_) => P2pStatus::Checksum,
            Error::Io { .. } => P2pStatus::Io,
            _ => P2pStatus::Other,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: P2pStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome) -> P2pStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => P2pStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            P2pStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(P2pStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn model_ref<'a>(model: *const P2pModel) -> Result<&'a P2pModel, Failure> {
    non_null(model, "model")?;
    Ok(&*model)
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Outcome {
    non_null(out, "out")?;
    out.write(value);
    Ok(())
}

fn pixel_count(width: usize, height: usize) -> Result<usize, Failure> {
    match width.checked_mul(height) {
        Some(n) if n > 0 => Ok(n),
        _ => Err(fail(
            P2pStatus::InvalidArgument,
            format!("invalid image size {width}x{height}"),
        )),
    }
}

unsafe fn bytes<'a>(p: *const u8, len: usize, name: &str) -> Result<&'a [u8], Failure> {
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn gray(p: *const u8, width: usize, height: usize, name: &str) -> Result<GrayImage, Failure> {
    let n = pixel_count(width, height)?;
    let data = bytes(p, n, name)?.to_vec();
    GrayImage::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| fail(P2pStatus::InvalidArgument, "image too large"))
}

unsafe fn labels(p: *const u8, width: usize, height: usize, name: &str) -> Result<LabelMap, Failure> {
    let n = pixel_count(width, height)?;
    let ids = bytes(p, n, name)?.to_vec();
    if let Some(bad) = ids.iter().find(|&&v| Class::from_id(v).is_none()) {
        return Err(fail(
            P2pStatus::InvalidArgument,
            format!("{name} holds label {bad}, expected 0..{}", Class::ALL.len()),
        ));
    }
    Ok(LabelMap::from_ids(height, width, ids)?)
}

fn task_bytes(task: Task, n: usize) -> usize {
    match task {
        Task::Segmentation => 3 * n * n,
        Task::BoneSuppression => n * n,
    }
}

fn output_len(ckpt: &Checkpoint) -> usize {
    let n = ckpt.config.scheme.image_size;
    ckpt.config
        .scheme
        .tasks()
        .iter()
        .map(|&t| task_bytes(t, n))
        .sum()
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn p2p_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn p2p_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and verifies a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn p2p_model_load(path: *const c_char, out: *mut *mut P2pModel) -> P2pStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        out.write(ptr::null_mut());
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(P2pStatus::InvalidArgument, "path is not UTF-8"))?;
        let ckpt = load_checkpoint(Path::new(path))?;
        out.write(Box::into_raw(Box::new(P2pModel { ckpt })));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`p2p_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn p2p_model_free(model: *mut P2pModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side length of the square images the model takes and produces.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn p2p_model_image_size(model: *const P2pModel, out: *mut usize) -> P2pStatus {
    guard(|| write_out(out, model_ref(model)?.ckpt.config.scheme.image_size))
}

/// Number of output heads (1 for single-task schemes, 2 for multitask).
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn p2p_model_task_count(model: *const P2pModel, out: *mut usize) -> P2pStatus {
    guard(|| write_out(out, model_ref(model)?.ckpt.config.scheme.tasks().len()))
}

/// Kind of output head `index`, in the order used by [`p2p_model_infer`].
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn p2p_model_task(
    model: *const P2pModel,
    index: usize,
    out: *mut P2pTask,
) -> P2pStatus {
    guard(|| {
        let tasks = model_ref(model)?.ckpt.config.scheme.tasks();
        let task = tasks.get(index).ok_or_else(|| {
            fail(
                P2pStatus::InvalidArgument,
                format!("task index {index} out of range ({} tasks)", tasks.len()),
            )
        })?;
        write_out(
            out,
            match task {
                Task::Segmentation => P2pTask::Segmentation,
                Task::BoneSuppression => P2pTask::BoneSuppression,
            },
        )
    })
}

/// Bytes [`p2p_model_infer`] writes.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn p2p_model_output_len(model: *const P2pModel, out: *mut usize) -> P2pStatus {
    guard(|| write_out(out, output_len(&model_ref(model)?.ckpt)))
}

/// Runs the generator on one grayscale radiograph of the model's image
/// size. Outputs are written back to back in task order: RGB rows for a
/// segmentation mask, one byte per pixel for a bone-suppressed image.
///
/// # Safety
/// `pixels` must hold `width * height` bytes and `out` `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn p2p_model_infer(
    model: *const P2pModel,
    pixels: *const u8,
    width: usize,
    height: usize,
    out: *mut u8,
    out_len: usize,
) -> P2pStatus {
    guard(|| {
        let ckpt = &model_ref(model)?.ckpt;
        let n = ckpt.config.scheme.image_size;
        if (width, height) != (n, n) {
            return Err(fail(
                P2pStatus::Shape,
                format!("input is {width}x{height}, model expects {n}x{n}"),
            ));
        }
        let need = output_len(ckpt);
        non_null(out, "out")?;
        if out_len < need {
            return Err(fail(
                P2pStatus::BufferTooSmall,
                format!("output buffer holds {out_len} bytes, {need} needed"),
            ));
        }
        let x = Image::from_gray(&gray(pixels, width, height, "pixels")?);
        let dst = std::slice::from_raw_parts_mut(out, need);
        let mut at = 0;
        for o in infer(ckpt, &x)? {
            let raw = match o.task {
                Task::Segmentation => o.image.to_rgb8().into_raw(),
                Task::BoneSuppression => o.image.to_gray8().into_raw(),
            };
            dst[at..at + raw.len()].copy_from_slice(&raw);
            at += raw.len();
        }
        Ok(())
    })
}

unsafe fn overlap(
    pred: *const u8,
    truth: *const u8,
    width: usize,
    height: usize,
    structure: u8,
    score: fn(&pix2pix_mt::metrics::ConfusionAreas) -> f64,
    out: *mut f64,
) -> P2pStatus {
    guard(|| {
        let class = Class::from_id(structure)
            .filter(|c| *c != Class::Background)
            .ok_or_else(|| {
                fail(
                    P2pStatus::InvalidArgument,
                    format!("structure {structure} is not a foreground label"),
                )
            })?;
        let pm = labels(pred, width, height, "pred")?;
        let gt = labels(truth, width, height, "truth")?;
        write_out(out, score(&confusion_areas(&pm, &gt, class)?))
    })
}

/// Dice coefficient of one structure between two label maps holding class
/// ids (0 background, 1 left lung, 2 right lung, 3 heart).
///
/// # Safety
/// `pred` and `truth` must hold `width * height` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn p2p_dice(
    pred: *const u8,
    truth: *const u8,
    width: usize,
    height: usize,
    structure: u8,
    out: *mut f64,
) -> P2pStatus {
    overlap(pred, truth, width, height, structure, dice, out)
}

/// Jaccard index, same conventions as [`p2p_dice`].
///
/// # Safety
/// `pred` and `truth` must hold `width * height` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn p2p_jaccard(
    pred: *const u8,
    truth: *const u8,
    width: usize,
    height: usize,
    structure: u8,
    out: *mut f64,
) -> P2pStatus {
    overlap(pred, truth, width, height, structure, jaccard, out)
}

/// Root mean squared error between two grayscale images, in grey levels.
///
/// # Safety
/// `a` and `b` must hold `width * height` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn p2p_rmse(
    a: *const u8,
    b: *const u8,
    width: usize,
    height: usize,
    out: *mut f64,
) -> P2pStatus {
    guard(|| {
        let (x, y) = (gray(a, width, height, "a")?, gray(b, width, height, "b")?);
        write_out(out, rmse(&x, &y)?)
    })
}

/// Mean structural similarity over 8x8 windows (both sides at least 8).
///
/// # Safety
/// `a` and `b` must hold `width * height` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn p2p_mssim(
    a: *const u8,
    b: *const u8,
    width: usize,
    height: usize,
    out: *mut f64,
) -> P2pStatus {
    guard(|| {
        let (x, y) = (gray(a, width, height, "a")?, gray(b, width, height, "b")?);
        write_out(out, mssim(&x, &y)?)
    })
}
