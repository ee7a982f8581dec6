//! Deterministic synthetic frames whose masks are exactly the projections
//! of each pedestrian's LiDAR returns.

use std::collections::HashMap;

use nalgebra::{Matrix3, Matrix3x4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Frame;
use super::label::{round2, LabelRecord};
use super::masks::{InstanceMask, InstanceMaskSet};
use crate::geometry::{box_corners_3d, Box3D, Calibration, LidarPoint, Point3, PointCloud};

const MAX_TRIES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPedestrian {
    /// Lateral position (camera x), meters.
    pub x: f64,
    /// Forward position (camera z), meters.
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
    /// LiDAR returns on the body.
    pub points: usize,
}

impl Default for SyntheticPedestrian {
    fn default() -> Self {
        Self {
            x: 0.0,
            z: 20.0,
            l: 0.84,
            w: 0.66,
            h: 1.76,
            theta: 0.0,
            points: 18,
        }
    }
}

impl SyntheticPedestrian {
    pub fn at(x: f64, z: f64) -> Self {
        Self { x, z, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub frame_id: String,
    pub pedestrians: Vec<SyntheticPedestrian>,
    /// Camera-frame y of the ground plane (y points down).
    pub ground_height: f64,
    /// Ground returns sampled in a ring around each pedestrian.
    pub ground_patch_points: usize,
    /// Ground returns spread over the whole scene.
    pub ground_points: usize,
    /// Off-ground clutter returns.
    pub clutter_points: usize,
    pub image_width: u32,
    pub image_height: u32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            frame_id: "000000".into(),
            pedestrians: Vec::new(),
            ground_height: 1.65,
            ground_patch_points: 24,
            ground_points: 1500,
            clutter_points: 300,
            image_width: super::DEFAULT_IMAGE_WIDTH,
            image_height: super::DEFAULT_IMAGE_HEIGHT,
        }
    }
}

/// Body returns per pedestrian for each of the range bands
/// [7, 10), [10, 20), [20, 30) and [30, 45] meters.
pub const RANDOM_SCENE_POINTS: [usize; 4] = [60, 40, 25, 18];

/// A random scene of one to four pedestrians between 7 and 45 m, spread in
/// bearing so that no two overlap in the image. Ranges stay 0.25 m away
/// from band edges so rounding in the labels cannot move them across.
pub fn random_scene(frame_id: &str, seed: u64) -> SyntheticSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=4);
    let edges = [7.0, 10.0, 20.0, 30.0, 45.0];
    let mut bearings: Vec<f64> = Vec::new();
    let mut pedestrians = Vec::new();
    while pedestrians.len() < n {
        let band = rng.gen_range(0..4);
        let r: f64 = rng.gen_range(edges[band] + 0.25..edges[band + 1] - 0.25);
        let phi: f64 = rng.gen_range(-0.4..0.4);
        if bearings.iter().any(|b| (b - phi).abs() < 0.14) {
            continue;
        }
        bearings.push(phi);
        pedestrians.push(SyntheticPedestrian {
            x: r * phi.sin(),
            z: r * phi.cos(),
            theta: rng.gen_range(-3.1..3.1),
            points: RANDOM_SCENE_POINTS[band],
            ..SyntheticPedestrian::default()
        });
    }
    SyntheticSpec {
        frame_id: frame_id.to_owned(),
        pedestrians,
        ..SyntheticSpec::default()
    }
}

/// KITTI-like intrinsics with an axis-permutation extrinsic
/// (velodyne x forward, y left, z up).
pub fn synthetic_calibration(image_width: u32, image_height: u32) -> Calibration {
    let p2 = Matrix3x4::new(
        721.5377, 0.0, 609.5593, 0.0, //
        0.0, 721.5377, 172.854, 0.0, //
        0.0, 0.0, 1.0, 0.0,
    );
    let tr = Matrix3x4::new(
        0.0, -1.0, 0.0, 0.0, //
        0.0, 0.0, -1.0, 0.0, //
        1.0, 0.0, 0.0, 0.0,
    );
    Calibration::new(p2, Matrix3::identity(), tr, image_width, image_height)
        .expect("synthetic calibration is valid")
}

struct Scene<'a> {
    calib: &'a Calibration,
    rng: ChaCha8Rng,
    cloud: Vec<LidarPoint>,
    /// pixel index -> owning pedestrian
    owner: HashMap<u64, usize>,
    boxes: Vec<Box3D>,
}

impl Scene<'_> {
    /// Stores the point at `f32` precision and returns it in the camera frame.
    fn quantize(&self, p: &Point3) -> Option<(LidarPoint, Point3)> {
        let v = self.calib.rect_to_velo(p)?;
        let lp = LidarPoint::new(v.x as f32 as f64, v.y as f32 as f64, v.z as f32 as f64, 0.0);
        Some((lp, self.calib.velo_to_rect(&lp)))
    }

    fn pixel_of(&self, p: &Point3) -> Option<u64> {
        let (u, v) = self.calib.project_rect(p)?;
        self.calib
            .in_image(u, v)
            .then(|| v.floor() as u64 * self.calib.image_width as u64 + u.floor() as u64)
    }

    fn push(&mut self, mut lp: LidarPoint) {
        lp.reflectance = self.rng.gen::<f32>() as f64;
        self.cloud.push(lp);
    }

    /// Background point: must stay out of every box and off every mask pixel.
    fn try_background(&mut self, candidate: Point3) -> bool {
        let Some((lp, rect)) = self.quantize(&candidate) else {
            return false;
        };
        if self.boxes.iter().any(|b| b.contains(&rect)) {
            return false;
        }
        if let Some(px) = self.pixel_of(&rect) {
            if self.owner.contains_key(&px) {
                return false;
            }
        }
        self.push(lp);
        true
    }
}

fn label_for(ped: &SyntheticPedestrian, ground_y: f64, calib: &Calibration) -> Option<LabelRecord> {
    let mut rec = LabelRecord {
        kind: "Pedestrian".into(),
        truncated: 0.0,
        occluded: 0,
        alpha: 0.0,
        bbox: [0.0; 4],
        dims: [round2(ped.h), round2(ped.w), round2(ped.l)],
        location: [round2(ped.x), round2(ground_y), round2(ped.z)],
        rotation_y: round2(crate::geometry::normalize_angle(ped.theta)),
        score: None,
    };
    let b = rec.to_box().ok()?;
    rec.alpha = round2(crate::geometry::normalize_angle(b.theta - b.cx.atan2(b.cz)));
    let (mut lo_u, mut lo_v, mut hi_u, mut hi_v) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for c in box_corners_3d(&b) {
        let (u, v) = calib.project_rect(&c)?;
        lo_u = lo_u.min(u);
        lo_v = lo_v.min(v);
        hi_u = hi_u.max(u);
        hi_v = hi_v.max(v);
    }
    let (w, h) = (calib.image_width as f64, calib.image_height as f64);
    let full = (hi_u - lo_u) * (hi_v - lo_v);
    let clamped = [lo_u.max(0.0), lo_v.max(0.0), hi_u.min(w - 1.0), hi_v.min(h - 1.0)].map(round2);
    if !(clamped[2] > clamped[0] && clamped[3] > clamped[1]) {
        return None;
    }
    let visible = (clamped[2] - clamped[0]) * (clamped[3] - clamped[1]);
    rec.truncated = round2((1.0 - visible / full).clamp(0.0, 1.0));
    rec.bbox = clamped;
    Some(rec)
}

/// Generates one frame. Pedestrians whose box does not project into the
/// image are dropped. Body points are rejection-sampled so that no pixel is
/// shared between instances; background points never land inside a box or
/// on a mask pixel.
pub fn generate_synthetic_frame(spec: &SyntheticSpec, seed: u64) -> Frame {
    let calib = synthetic_calibration(spec.image_width, spec.image_height);
    let ground_y = spec.ground_height as f32 as f64;
    let mut scene = Scene {
        calib: &calib,
        rng: ChaCha8Rng::seed_from_u64(seed),
        cloud: Vec::new(),
        owner: HashMap::new(),
        boxes: Vec::new(),
    };

    let mut labels = Vec::new();
    for ped in &spec.pedestrians {
        if let Some(rec) = label_for(ped, ground_y, &calib) {
            scene.boxes.push(rec.to_box().expect("positive synthetic dims"));
            labels.push((rec, ped.points));
        }
    }

    let mut masks = InstanceMaskSet::empty(spec.image_width, spec.image_height);
    for (k, (rec, n_points)) in labels.iter().enumerate() {
        let b = scene.boxes[k];
        // body returns concentrate on the sensor-facing surface
        let range = b.cx.hypot(b.cz);
        let (los_x, los_z) = (b.cx / range, b.cz / range);
        let (lat_x, lat_z) = (los_z, -los_x);
        let half_lat = b.l.min(b.w) / 2.0;
        let mut pixels = Vec::new();
        for _ in 0..*n_points {
            for _ in 0..MAX_TRIES {
                let lat = scene.rng.gen_range(-half_lat..half_lat);
                let depth = scene.rng.gen_range(-0.15..0.05);
                let up = scene.rng.gen_range(0.03..b.h - 0.03);
                let cand = Point3::new(
                    b.cx + lat * lat_x + depth * los_x,
                    b.bottom_y() - up,
                    b.cz + lat * lat_z + depth * los_z,
                );
                let Some((lp, rect)) = scene.quantize(&cand) else {
                    continue;
                };
                if !b.contains(&rect) || scene.boxes.iter().enumerate().any(|(j, o)| j != k && o.contains(&rect)) {
                    continue;
                }
                let Some(px) = scene.pixel_of(&rect) else {
                    continue;
                };
                match scene.owner.get(&px) {
                    Some(&o) if o != k => continue,
                    _ => {}
                }
                scene.owner.insert(px, k);
                pixels.push(px);
                scene.push(lp);
                break;
            }
        }
        if !pixels.is_empty() {
            masks.instances.push(InstanceMask {
                instance_id: k as u32 + 1,
                class: rec.kind.clone(),
                score: 1.0,
                rle: InstanceMask::runs_from_indices(pixels),
            });
        }
    }

    let boxes = scene.boxes.clone();
    for b in &boxes {
        let inner = b.l.hypot(b.w) / 2.0 + 0.02;
        for _ in 0..spec.ground_patch_points {
            for _ in 0..MAX_TRIES {
                let r = scene.rng.gen_range(inner..inner + 0.35);
                let phi = scene.rng.gen_range(0.0..std::f64::consts::TAU);
                let cand = Point3::new(b.cx + r * phi.cos(), ground_y, b.cz + r * phi.sin());
                if scene.try_background(cand) {
                    break;
                }
            }
        }
    }
    for _ in 0..spec.ground_points {
        for _ in 0..MAX_TRIES {
            let cand = Point3::new(
                scene.rng.gen_range(-20.0..20.0),
                ground_y,
                scene.rng.gen_range(2.0..70.0),
            );
            if scene.try_background(cand) {
                break;
            }
        }
    }
    for _ in 0..spec.clutter_points {
        for _ in 0..MAX_TRIES {
            let cand = Point3::new(
                scene.rng.gen_range(-20.0..20.0),
                scene.rng.gen_range(ground_y - 3.0..ground_y - 0.05),
                scene.rng.gen_range(2.0..70.0),
            );
            if scene.try_background(cand) {
                break;
            }
        }
    }

    Frame {
        frame_id: spec.frame_id.clone(),
        cloud: PointCloud::new(scene.cloud),
        calib: calib.clone(),
        masks: Some(masks),
        labels: Some(labels.into_iter().map(|(r, _)| r).collect()),
    }
}
