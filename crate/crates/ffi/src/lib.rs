//! C interface to the `lrpd` toolkit.
//!
//! Every fallible call returns an [`LrpdStatus`]; on failure the message is
//! available from [`lrpd_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `_free` function. Strings
//! returned by the library are freed with [`lrpd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lrpd::eval::{range_binned_map, EvalConfig, EvalFrame};
use lrpd::geometry::{bev_iou, Box3D, Point3};
use lrpd::kitti_io::{parse_calib, parse_label_file, parse_masks, read_velodyne, Frame, KittiLayout};
use lrpd::loss::{automated_focal_loss, heading_loss, smooth_l1};
use lrpd::proposal::{propose_frame, MeanBoxConfig, Proposal};
use lrpd::voxel::{voxelize, DensityNormalization, VoxelConfig, CELLS};
use lrpd::Error;

/// Number of floats in one voxel tensor (two channels).
pub const LRPD_VOXEL_TENSOR_LEN: usize = 73_728;
const _: () = assert!(LRPD_VOXEL_TENSOR_LEN == 2 * CELLS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrpdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    BufferTooSmall = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Oriented box, camera frame. `cy` is the volumetric center.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrpdBox {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
    pub score: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrpdProposal {
    pub bbox: LrpdBox,
    pub instance_id: u32,
    pub inlier_count: usize,
    pub support: usize,
    pub source_point_index: usize,
}

pub struct LrpdFrame(Frame);

pub struct LrpdProposals(Vec<Proposal>);

pub struct LrpdEvaluator {
    config: EvalConfig,
    frames: Vec<EvalFrame>,
}

struct Fail(LrpdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn status_of(e: &Error) -> LrpdStatus {
    match e {
        Error::Frame { source, .. } => status_of(source),
        Error::Path { .. } | Error::Io(_) => LrpdStatus::Io,
        Error::Label { .. } | Error::Calib(_) | Error::VelodyneLength(_) | Error::Mask(_) | Error::Json(_) => {
            LrpdStatus::Parse
        }
        Error::Invalid { .. } | Error::Config(_) => LrpdStatus::InvalidArgument,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LrpdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LrpdStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            LrpdStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LrpdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    let s = get(p, what).map(|_| CStr::from_ptr(p))?;
    s.to_str()
        .map_err(|_| Fail(LrpdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

fn to_box(b: &LrpdBox) -> Result<Box3D, Fail> {
    Ok(Box3D::new(Point3::new(b.cx, b.cy, b.cz), b.l, b.w, b.h, b.theta)?.with_score(b.score))
}

fn from_box(b: &Box3D) -> LrpdBox {
    LrpdBox {
        cx: b.cx,
        cy: b.cy,
        cz: b.cz,
        l: b.l,
        w: b.w,
        h: b.h,
        theta: b.theta,
        score: b.score,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lrpd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lrpd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn lrpd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `a`, `b` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lrpd_bev_iou(a: *const LrpdBox, b: *const LrpdBox, out: *mut f64) -> LrpdStatus {
    guard(|| {
        let (a, b) = (to_box(get(a, "a")?)?, to_box(get(b, "b")?)?);
        *get_mut(out, "out")? = bev_iou(&a, &b);
        Ok(())
    })
}

/// Loads `velodyne/<id>.bin`, `calib/<id>.txt` and, when present,
/// `masks/<id>.json` and `label_2/<id>.txt` under `root`.
///
/// # Safety
/// `root` and `frame_id` must be NUL-terminated strings; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrpd_frame_load(
    root: *const c_char,
    frame_id: *const c_char,
    out: *mut *mut LrpdFrame,
) -> LrpdStatus {
    guard(|| {
        let layout = KittiLayout::new(Path::new(text(root, "root")?));
        let frame = layout.load_frame(text(frame_id, "frame_id")?, false, false)?;
        *get_mut(out, "out")? = Box::into_raw(Box::new(LrpdFrame(frame)));
        Ok(())
    })
}

/// Builds a frame from in-memory data. `velodyne` holds packed little-endian
/// `f32` quadruples; `masks_json` and `labels` may be null.
///
/// # Safety
/// `velodyne` must point to `velodyne_len` readable bytes; strings must be
/// NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrpd_frame_from_buffers(
    frame_id: *const c_char,
    velodyne: *const u8,
    velodyne_len: usize,
    calib: *const c_char,
    masks_json: *const c_char,
    labels: *const c_char,
    out: *mut *mut LrpdFrame,
) -> LrpdStatus {
    guard(|| {
        let bytes = if velodyne_len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(get(velodyne, "velodyne")?, velodyne_len)
        };
        let frame = Frame {
            frame_id: text(frame_id, "frame_id")?.to_owned(),
            cloud: read_velodyne(bytes)?,
            calib: parse_calib(text(calib, "calib")?)?,
            masks: opt_text(masks_json, "masks_json")?.map(parse_masks).transpose()?,
            labels: opt_text(labels, "labels")?.map(parse_label_file).transpose()?,
        };
        frame.validate()?;
        *get_mut(out, "out")? = Box::into_raw(Box::new(LrpdFrame(frame)));
        Ok(())
    })
}

/// # Safety
/// `frame` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn lrpd_frame_free(frame: *mut LrpdFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Number of LiDAR points, 0 for a null handle.
///
/// # Safety
/// `frame` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrpd_frame_point_count(frame: *const LrpdFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.0.cloud.len())
}

/// Proposals with per-instance suppression. Non-positive mean dims select the
/// built-in pedestrian defaults. A frame without masks yields an empty list.
///
/// # Safety
/// `frame` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrpd_propose(
    frame: *const LrpdFrame,
    mean_l: f64,
    mean_w: f64,
    mean_h: f64,
    nms_iou: f64,
    out: *mut *mut LrpdProposals,
) -> LrpdStatus {
    guard(|| {
        let frame = get(frame, "frame")?;
        let mean = if mean_l > 0.0 && mean_w > 0.0 && mean_h > 0.0 {
            MeanBoxConfig {
                l: mean_l,
                w: mean_w,
                h: mean_h,
            }
        } else {
            MeanBoxConfig::default()
        };
        if !(nms_iou > 0.0 && nms_iou <= 1.0) {
            return Err(Fail(LrpdStatus::InvalidArgument, format!("nms_iou {nms_iou} not in (0, 1]")));
        }
        let props = propose_frame(&frame.0, &mean, nms_iou);
        *get_mut(out, "out")? = Box::into_raw(Box::new(LrpdProposals(props)));
        Ok(())
    })
}

/// # Safety
/// `list` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrpd_proposals_len(list: *const LrpdProposals) -> usize {
    list.as_ref().map_or(0, |l| l.0.len())
}

/// # Safety
/// `list` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrpd_proposals_get(
    list: *const LrpdProposals,
    index: usize,
    out: *mut LrpdProposal,
) -> LrpdStatus {
    guard(|| {
        let list = get(list, "list")?;
        let p = list.0.get(index).ok_or_else(|| {
            Fail(LrpdStatus::OutOfRange, format!("index {index} >= {}", list.0.len()))
        })?;
        *get_mut(out, "out")? = LrpdProposal {
            bbox: from_box(&p.bbox),
            instance_id: p.instance_id,
            inlier_count: p.inlier_count,
            support: p.support,
            source_point_index: p.source_point_index,
        };
        Ok(())
    })
}

/// # Safety
/// `list` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn lrpd_proposals_free(list: *mut LrpdProposals) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// Voxelizes the frame around `center` (camera frame) into `out`, laid out
/// `[channel][x][z][height]` with channel 0 the max height and channel 1 the
/// max-count normalized density. `extent` (x, height, z in meters) may be
/// null for the 4 x 3 x 4 m default. `out_len` must be at least
/// `LRPD_VOXEL_TENSOR_LEN`.
///
/// # Safety
/// `frame` and `center` must be valid; `extent` null or three doubles;
/// `out` must point to `out_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn lrpd_voxelize(
    frame: *const LrpdFrame,
    center: *const f64,
    extent: *const f64,
    out: *mut f32,
    out_len: usize,
) -> LrpdStatus {
    guard(|| {
        let frame = get(frame, "frame")?;
        let c = std::slice::from_raw_parts(get(center, "center")?, 3);
        let mut config = VoxelConfig {
            normalization: DensityNormalization::MaxCount,
            ..VoxelConfig::default()
        };
        if !extent.is_null() {
            config.extent.copy_from_slice(std::slice::from_raw_parts(extent, 3));
        }
        config.validate()?;
        if out_len < LRPD_VOXEL_TENSOR_LEN {
            return Err(Fail(
                LrpdStatus::BufferTooSmall,
                format!("need {LRPD_VOXEL_TENSOR_LEN} floats, got {out_len}"),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(get_mut(out, "out")?, LRPD_VOXEL_TENSOR_LEN);
        let points = frame.0.calib.cloud_to_rect(&frame.0.cloud);
        let grid = voxelize(&points, &Point3::new(c[0], c[1], c[2]), &config);
        for (d, v) in dst.iter_mut().zip(grid.max_height.iter().chain(&grid.density)) {
            *d = *v as f32;
        }
        Ok(())
    })
}

/// Objectness loss and its derivative in `p_t`. `grad` may be null.
///
/// # Safety
/// `value` must be valid; `grad` null or valid.
#[no_mangle]
pub unsafe extern "C" fn lrpd_focal_loss(p_t: f64, p_hat_t: f64, value: *mut f64, grad: *mut f64) -> LrpdStatus {
    guard(|| {
        let (v, g) = automated_focal_loss(p_t, p_hat_t);
        *get_mut(value, "value")? = v;
        if let Some(out) = grad.as_mut() {
            *out = g;
        }
        Ok(())
    })
}

/// # Safety
/// `value` must be valid; `grad` null or valid.
#[no_mangle]
pub unsafe extern "C" fn lrpd_smooth_l1(residual: f64, value: *mut f64, grad: *mut f64) -> LrpdStatus {
    guard(|| {
        let (v, g) = smooth_l1(residual);
        *get_mut(value, "value")? = v;
        if let Some(out) = grad.as_mut() {
            *out = g;
        }
        Ok(())
    })
}

/// Heading loss against `theta_gt`; `grad` receives d/ds and d/dc.
///
/// # Safety
/// `value` must be valid; `grad` null or two writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lrpd_heading_loss(
    s_pred: f64,
    c_pred: f64,
    theta_gt: f64,
    value: *mut f64,
    grad: *mut f64,
) -> LrpdStatus {
    guard(|| {
        let (v, g) = heading_loss(s_pred, c_pred, theta_gt);
        *get_mut(value, "value")? = v;
        if !grad.is_null() {
            std::slice::from_raw_parts_mut(grad, 2).copy_from_slice(&g);
        }
        Ok(())
    })
}

/// New evaluator. `config_json` may be null for the defaults; otherwise it
/// uses the same keys as the `[eval]` table of the pipeline config.
///
/// # Safety
/// `config_json` null or NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lrpd_evaluator_new(config_json: *const c_char, out: *mut *mut LrpdEvaluator) -> LrpdStatus {
    guard(|| {
        let config: EvalConfig = match opt_text(config_json, "config_json")? {
            Some(t) => serde_json::from_str(t).map_err(|e| Fail(LrpdStatus::Parse, format!("eval config: {e}")))?,
            None => EvalConfig::default(),
        };
        config.validate()?;
        *get_mut(out, "out")? = Box::into_raw(Box::new(LrpdEvaluator {
            config,
            frames: Vec::new(),
        }));
        Ok(())
    })
}

/// Adds one frame given KITTI label text for ground truth and detections.
///
/// # Safety
/// `ev` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lrpd_evaluator_add_frame(
    ev: *mut LrpdEvaluator,
    frame_id: *const c_char,
    ground_truth: *const c_char,
    detections: *const c_char,
) -> LrpdStatus {
    guard(|| {
        let ev = get_mut(ev, "evaluator")?;
        let frame_id = text(frame_id, "frame_id")?.to_owned();
        let in_frame = |e: Error| Fail::from(Error::Frame {
            frame: frame_id.clone(),
            source: Box::new(e),
        });
        let ground_truth = parse_label_file(text(ground_truth, "ground_truth")?).map_err(in_frame)?;
        let detections = parse_label_file(text(detections, "detections")?).map_err(in_frame)?;
        ev.frames.push(EvalFrame {
            frame_id,
            ground_truth,
            detections,
        });
        Ok(())
    })
}

/// Range-binned report over all frames added so far, as JSON. The evaluator
/// stays usable. Free the string with `lrpd_string_free`.
///
/// # Safety
/// `ev` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lrpd_evaluator_finish(ev: *const LrpdEvaluator, out: *mut *mut c_char) -> LrpdStatus {
    guard(|| {
        let ev = get(ev, "evaluator")?;
        let report = range_binned_map(&ev.frames, &ev.config)?;
        let json = serde_json::to_string(&report).map_err(Error::from)?;
        let c = CString::new(json).map_err(|e| Fail(LrpdStatus::Panic, e.to_string()))?;
        *get_mut(out, "out")? = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `ev` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn lrpd_evaluator_free(ev: *mut LrpdEvaluator) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}
