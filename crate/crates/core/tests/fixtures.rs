use std::path::{Path, PathBuf};

use lrpd::geometry::project_points;
use lrpd::kitti_io::{parse_calib, parse_label_file, read_velodyne, write_calib};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

// Counts from an independent numpy re-implementation of the projection.
const IN_IMAGE: usize = 10_464;
const IN_FRONT: usize = 14_947;

#[test]
fn fixture_scan_projects_like_the_reference() {
    let calib = parse_calib(&std::fs::read_to_string(fixture("000000_calib.txt")).unwrap()).unwrap();
    let cloud = read_velodyne(&std::fs::read(fixture("000000.bin")).unwrap()).unwrap();
    assert_eq!(cloud.len(), 20_000);
    assert_eq!((calib.image_width, calib.image_height), (1242, 375));

    let projected = project_points(&cloud, &calib);
    assert_eq!(projected.len(), IN_IMAGE);
    let front = calib.cloud_to_rect(&cloud).iter().filter(|p| p.z > 0.0).count();
    assert_eq!(front, IN_FRONT);

    for p in &projected {
        assert!(p.u >= 0.0 && p.u < 1242.0 && p.v >= 0.0 && p.v < 375.0);
    }
    let mut idx: Vec<usize> = projected.iter().map(|p| p.point_index).collect();
    let n = idx.len();
    idx.dedup();
    assert_eq!(idx.len(), n, "indices ascending and unique");
}

#[test]
fn fixture_calibration_round_trips() {
    let text = std::fs::read_to_string(fixture("000000_calib.txt")).unwrap();
    let calib = parse_calib(&text).unwrap();
    assert!(calib.validate().is_ok());
    assert_eq!(parse_calib(&write_calib(&calib)).unwrap(), calib);
}

#[test]
fn fixture_label_gives_volumetric_center() {
    let labels = parse_label_file(&std::fs::read_to_string(fixture("000000.txt")).unwrap()).unwrap();
    let b = labels[0].to_box().unwrap();
    assert_eq!((b.cx, b.cz), (1.84, 8.41));
    assert!((b.cy - (1.47 - 1.89 / 2.0)).abs() < 1e-12);
    assert_eq!((b.l, b.w, b.h), (1.20, 0.48, 1.89));
    assert!((lrpd::geometry::planar_range(&b) - 1.84f64.hypot(8.41)).abs() < 1e-12);
}
