use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use lrpd::geometry::Point3;
use lrpd::kitti_io::{
    generate_synthetic_frame, random_scene, write_calib, write_label_file, write_masks, write_velodyne, Frame,
};
use lrpd::proposal::{propose_frame, MeanBoxConfig};
use lrpd::voxel::{voxelize, VoxelConfig};
use lrpd_ffi::*;

fn last_error() -> String {
    let p = lrpd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn unit_box(cx: f64) -> LrpdBox {
    LrpdBox {
        cx,
        cy: 0.0,
        cz: 10.0,
        l: 2.0,
        w: 1.0,
        h: 1.7,
        theta: 0.0,
        score: 1.0,
    }
}

struct Owned(*mut LrpdFrame);

impl Drop for Owned {
    fn drop(&mut self) {
        unsafe { lrpd_frame_free(self.0) }
    }
}

fn frame_handle(frame: &Frame) -> Owned {
    let id = CString::new(frame.frame_id.clone()).unwrap();
    let velo = write_velodyne(&frame.cloud);
    let calib = CString::new(write_calib(&frame.calib)).unwrap();
    let masks = CString::new(write_masks(frame.masks.as_ref().unwrap())).unwrap();
    let labels = CString::new(write_label_file(frame.labels.as_deref().unwrap())).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe {
        lrpd_frame_from_buffers(
            id.as_ptr(),
            velo.as_ptr(),
            velo.len(),
            calib.as_ptr(),
            masks.as_ptr(),
            labels.as_ptr(),
            &mut out,
        )
    };
    assert_eq!(st, LrpdStatus::Ok);
    Owned(out)
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(lrpd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn iou_and_argument_errors() {
    let (a, b) = (unit_box(0.0), unit_box(1.0));
    let mut iou = -1.0;
    assert_eq!(unsafe { lrpd_bev_iou(&a, &b, &mut iou) }, LrpdStatus::Ok);
    assert!((iou - 1.0 / 3.0).abs() < 1e-12);

    assert_eq!(unsafe { lrpd_bev_iou(ptr::null(), &b, &mut iou) }, LrpdStatus::NullPointer);
    assert!(last_error().contains("a is null"));

    let flat = LrpdBox { l: 0.0, ..a };
    assert_eq!(unsafe { lrpd_bev_iou(&flat, &b, &mut iou) }, LrpdStatus::InvalidArgument);
    assert!(!last_error().is_empty());
}

#[test]
fn proposals_match_the_library() {
    let frame = generate_synthetic_frame(&random_scene("000007", 7), 7);
    let h = frame_handle(&frame);
    assert_eq!(unsafe { lrpd_frame_point_count(h.0) }, frame.cloud.len());
    assert_eq!(unsafe { lrpd_frame_point_count(ptr::null()) }, 0);

    let mut list = ptr::null_mut();
    assert_eq!(unsafe { lrpd_propose(h.0, 0.0, 0.0, 0.0, 0.5, &mut list) }, LrpdStatus::Ok);
    let expected = propose_frame(&frame, &MeanBoxConfig::default(), 0.5);
    let n = unsafe { lrpd_proposals_len(list) };
    assert_eq!(n, expected.len());
    assert!(n > 0);
    for (i, e) in expected.iter().enumerate() {
        let mut p = LrpdProposal {
            bbox: unit_box(0.0),
            instance_id: 0,
            inlier_count: 0,
            support: 0,
            source_point_index: 0,
        };
        assert_eq!(unsafe { lrpd_proposals_get(list, i, &mut p) }, LrpdStatus::Ok);
        assert_eq!(p.instance_id, e.instance_id);
        assert_eq!(p.support, e.support);
        assert_eq!(p.source_point_index, e.source_point_index);
        assert_eq!((p.bbox.cx, p.bbox.cy, p.bbox.cz), (e.bbox.cx, e.bbox.cy, e.bbox.cz));
    }
    let mut p = std::mem::MaybeUninit::<LrpdProposal>::uninit();
    assert_eq!(unsafe { lrpd_proposals_get(list, n, p.as_mut_ptr()) }, LrpdStatus::OutOfRange);
    unsafe { lrpd_proposals_free(list) };

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { lrpd_propose(h.0, 0.0, 0.0, 0.0, 1.5, &mut bad) }, LrpdStatus::InvalidArgument);
    assert!(bad.is_null());
}

#[test]
fn voxel_tensor_matches_the_library() {
    let frame = generate_synthetic_frame(&random_scene("000003", 3), 3);
    let h = frame_handle(&frame);
    let target = frame.labels.as_ref().unwrap()[0].to_box().unwrap().center();
    let center = [target.x, target.y, target.z];
    let mut buf = vec![0f32; LRPD_VOXEL_TENSOR_LEN];
    let st = unsafe { lrpd_voxelize(h.0, center.as_ptr(), ptr::null(), buf.as_mut_ptr(), buf.len()) };
    assert_eq!(st, LrpdStatus::Ok);

    let points = frame.calib.cloud_to_rect(&frame.cloud);
    let grid = voxelize(&points, &Point3::new(center[0], center[1], center[2]), &VoxelConfig::default());
    let bytes: Vec<u8> = buf.iter().flat_map(|v| v.to_le_bytes()).collect();
    assert_eq!(bytes, grid.to_tensor_bytes());
    assert!(grid.total_count() > 0);

    let st = unsafe { lrpd_voxelize(h.0, center.as_ptr(), ptr::null(), buf.as_mut_ptr(), 10) };
    assert_eq!(st, LrpdStatus::BufferTooSmall);
    let bad_extent = [4.0, -1.0, 4.0];
    let st = unsafe { lrpd_voxelize(h.0, center.as_ptr(), bad_extent.as_ptr(), buf.as_mut_ptr(), buf.len()) };
    assert_eq!(st, LrpdStatus::InvalidArgument);
}

#[test]
fn losses_match_the_library() {
    let (mut v, mut g) = (0.0, 0.0);
    assert_eq!(unsafe { lrpd_focal_loss(0.3, 0.6, &mut v, &mut g) }, LrpdStatus::Ok);
    assert_eq!((v, g), lrpd::loss::automated_focal_loss(0.3, 0.6));
    assert_eq!(unsafe { lrpd_focal_loss(0.3, 0.6, &mut v, ptr::null_mut()) }, LrpdStatus::Ok);
    assert_eq!(unsafe { lrpd_focal_loss(0.3, 0.6, ptr::null_mut(), &mut g) }, LrpdStatus::NullPointer);

    assert_eq!(unsafe { lrpd_smooth_l1(-2.5, &mut v, &mut g) }, LrpdStatus::Ok);
    assert_eq!((v, g), (2.0, -1.0));

    let mut grad = [0.0; 2];
    assert_eq!(unsafe { lrpd_heading_loss(0.1, 0.9, 0.4, &mut v, grad.as_mut_ptr()) }, LrpdStatus::Ok);
    let (ev, eg) = lrpd::loss::heading_loss(0.1, 0.9, 0.4);
    assert_eq!((v, grad), (ev, eg));
}

fn report(ev: *const LrpdEvaluator) -> serde_json::Value {
    let mut json: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { lrpd_evaluator_finish(ev, &mut json) }, LrpdStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { lrpd_string_free(json) };
    serde_json::from_str(&text).unwrap()
}

fn moderate_all_ap(r: &serde_json::Value) -> serde_json::Value {
    r["cells"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["difficulty"] == "moderate" && c["range"] == "all")
        .unwrap()["ap"]
        .clone()
}

#[test]
fn evaluator_scores_ground_truth_perfectly() {
    let mut ev = ptr::null_mut();
    assert_eq!(unsafe { lrpd_evaluator_new(ptr::null(), &mut ev) }, LrpdStatus::Ok);
    for k in 0..4u64 {
        let f = generate_synthetic_frame(&random_scene(&format!("{k:06}"), k), k);
        let gt = CString::new(write_label_file(f.labels.as_deref().unwrap())).unwrap();
        let id = CString::new(f.frame_id).unwrap();
        let st = unsafe { lrpd_evaluator_add_frame(ev, id.as_ptr(), gt.as_ptr(), gt.as_ptr()) };
        assert_eq!(st, LrpdStatus::Ok);
    }
    let r = report(ev);
    assert_eq!(r["n_frames"], 4);
    assert_eq!(moderate_all_ap(&r), 1.0);

    let id = CString::new("000099").unwrap();
    let junk = CString::new("Pedestrian 0 0 nope").unwrap();
    let st = unsafe { lrpd_evaluator_add_frame(ev, id.as_ptr(), junk.as_ptr(), junk.as_ptr()) };
    assert_eq!(st, LrpdStatus::Parse);
    assert!(last_error().contains("000099"));
    // failed frames are not added
    assert_eq!(report(ev)["n_frames"], 4);
    unsafe { lrpd_evaluator_free(ev) };
}

#[test]
fn evaluator_config_is_validated() {
    let mut ev = ptr::null_mut();
    let cfg = CString::new(r#"{"bins": [0, 15, 40]}"#).unwrap();
    assert_eq!(unsafe { lrpd_evaluator_new(cfg.as_ptr(), &mut ev) }, LrpdStatus::Ok);
    let r = report(ev);
    let ranges: Vec<&str> = r["cells"].as_array().unwrap().iter().map(|c| c["range"].as_str().unwrap()).collect();
    assert!(ranges.contains(&"15-40") && ranges.contains(&"40+"));
    unsafe { lrpd_evaluator_free(ev) };

    let mut ev = ptr::null_mut();
    let bad = CString::new(r#"{"bins": [0, 30, 10]}"#).unwrap();
    assert_ne!(unsafe { lrpd_evaluator_new(bad.as_ptr(), &mut ev) }, LrpdStatus::Ok);
    assert!(ev.is_null());
    let junk = CString::new("{").unwrap();
    assert_eq!(unsafe { lrpd_evaluator_new(junk.as_ptr(), &mut ev) }, LrpdStatus::Parse);
}

#[test]
fn loading_a_missing_frame_is_an_io_error() {
    let root = CString::new("/nonexistent/kitti").unwrap();
    let id = CString::new("000000").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { lrpd_frame_load(root.as_ptr(), id.as_ptr(), &mut out) }, LrpdStatus::Io);
    assert!(out.is_null());
    assert!(last_error().contains("000000"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lrpd.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "lrpd_last_error",
        "lrpd_version",
        "lrpd_string_free",
        "lrpd_bev_iou",
        "lrpd_frame_load",
        "lrpd_frame_from_buffers",
        "lrpd_frame_free",
        "lrpd_frame_point_count",
        "lrpd_propose",
        "lrpd_proposals_len",
        "lrpd_proposals_get",
        "lrpd_proposals_free",
        "lrpd_voxelize",
        "lrpd_focal_loss",
        "lrpd_smooth_l1",
        "lrpd_heading_loss",
        "lrpd_evaluator_new",
        "lrpd_evaluator_add_frame",
        "lrpd_evaluator_finish",
        "lrpd_evaluator_free",
        "LRPD_VOXEL_TENSOR_LEN 73728",
        "typedef struct LrpdFrame LrpdFrame;",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // compile check only when a C compiler is around
    match Command::new("cc").args(["-fsyntax-only", "-std=c99", "-Wall", "-x", "c"]).arg(&header).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("cc not found, header compile check skipped"),
    }
}
