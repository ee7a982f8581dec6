//! Camera/LiDAR frames, oriented boxes and bird's-eye-view overlap.
//!
//! All boxes live in the rectified KITTI camera frame: x right, y down,
//! z forward. `Box3D::cy` is the volumetric center; the KITTI label
//! convention (y at the bottom face) is converted in `kitti_io`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overlap areas below this are treated as empty.
pub const AREA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Distance in the ground plane, ignoring height.
    pub fn bev_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.z - other.z)
    }
}

/// One LiDAR return in the sensor (velodyne) frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub reflectance: f64,
}

impl LidarPoint {
    pub const fn new(x: f64, y: f64, z: f64, reflectance: f64) -> Self {
        Self {
            x,
            y,
            z,
            reflectance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<LidarPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl FromIterator<LidarPoint> for PointCloud {
    fn from_iter<I: IntoIterator<Item = LidarPoint>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// KITTI camera calibration: left color camera projection, rectification
/// and the velodyne-to-camera rigid transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub p2: Matrix3x4<f64>,
    pub r0_rect: Matrix3<f64>,
    pub tr_velo_to_cam: Matrix3x4<f64>,
    pub image_width: u32,
    pub image_height: u32,
}

impl Calibration {
    pub fn new(
        p2: Matrix3x4<f64>,
        r0_rect: Matrix3<f64>,
        tr_velo_to_cam: Matrix3x4<f64>,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        let calib = Self {
            p2,
            r0_rect,
            tr_velo_to_cam,
            image_width,
            image_height,
        };
        calib.validate()?;
        Ok(calib)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Calib(format!(
                "image size {}x{} must be positive",
                self.image_width, self.image_height
            )));
        }
        let deviation = (self.r0_rect * self.r0_rect.transpose() - Matrix3::identity()).amax();
        if deviation.is_nan() || deviation > 1e-4 {
            return Err(Error::Calib(format!(
                "R0_rect is not orthonormal (max deviation {deviation:e})"
            )));
        }
        if self.p2.iter().chain(self.tr_velo_to_cam.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Calib("non-finite matrix entry".into()));
        }
        Ok(())
    }

    pub fn with_image_size(mut self, width: u32, height: u32) -> Result<Self> {
        self.image_width = width;
        self.image_height = height;
        self.validate()?;
        Ok(self)
    }

    fn velo_to_rect_matrix(&self) -> Matrix3x4<f64> {
        self.r0_rect * self.tr_velo_to_cam
    }

    /// Velodyne point to rectified camera frame.
    pub fn velo_to_rect(&self, p: &LidarPoint) -> Point3 {
        let v = self.velo_to_rect_matrix() * Vector4::new(p.x, p.y, p.z, 1.0);
        Point3::new(v.x, v.y, v.z)
    }

    pub fn cloud_to_rect(&self, cloud: &PointCloud) -> Vec<Point3> {
        let m = self.velo_to_rect_matrix();
        cloud
            .points
            .iter()
            .map(|p| {
                let v = m * Vector4::new(p.x, p.y, p.z, 1.0);
                Point3::new(v.x, v.y, v.z)
            })
            .collect()
    }

    /// Rectified camera frame back to velodyne. `None` if the transform is singular.
    pub fn rect_to_velo(&self, p: &Point3) -> Option<Point3> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 4>(0, 0)
            .copy_from(&self.velo_to_rect_matrix());
        let inv = m.try_inverse()?;
        let v = inv * Vector4::new(p.x, p.y, p.z, 1.0);
        Some(Point3::new(v.x, v.y, v.z))
    }

    /// Pixel coordinates of a rectified camera-frame point, if it lies in
    /// front of the camera. No image-bounds check.
    pub fn project_rect(&self, p: &Point3) -> Option<(f64, f64)> {
        if p.z.is_nan() || p.z <= 0.0 {
            return None;
        }
        let h: Vector3<f64> = self.p2 * Vector4::new(p.x, p.y, p.z, 1.0);
        if h.z.is_nan() || h.z <= 0.0 {
            return None;
        }
        Some((h.x / h.z, h.y / h.z))
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.image_width as f64 && v < self.image_height as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point_index: usize,
    pub u: f64,
    pub v: f64,
}

impl Projection {
    /// Raster pixel containing the projection.
    pub fn pixel(&self) -> (u32, u32) {
        (self.u.floor() as u32, self.v.floor() as u32)
    }
}

/// Projects every point with positive camera depth that lands inside the image.
pub fn project_points(cloud: &PointCloud, calib: &Calibration) -> Vec<Projection> {
    calib
        .cloud_to_rect(cloud)
        .iter()
        .enumerate()
        .filter_map(|(point_index, p)| {
            let (u, v) = calib.project_rect(p)?;
            calib.in_image(u, v).then_some(Projection { point_index, u, v })
        })
        .collect()
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Oriented 3D box in the rectified camera frame.
///
/// `theta` follows the KITTI `rotation_y` convention: at `theta = 0` the
/// length runs along x and the width along z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
    #[serde(default)]
    pub class_id: u32,
    #[serde(default = "default_score")]
    pub score: f64,
}

fn default_score() -> f64 {
    1.0
}

impl Box3D {
    pub fn new(center: Point3, l: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        let b = Self {
            cx: center.x,
            cy: center.y,
            cz: center.z,
            l,
            w,
            h,
            theta: normalize_angle(theta),
            class_id: 0,
            score: 1.0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.w > 0.0 && self.h > 0.0) {
            return Err(Error::invalid(
                "box",
                format!("dimensions must be positive, got l={} w={} h={}", self.l, self.w, self.h),
            ));
        }
        if !(self.center().is_finite() && self.theta.is_finite()) {
            return Err(Error::invalid("box", "non-finite center or heading"));
        }
        Ok(())
    }

    pub fn center(&self) -> Point3 {
        Point3::new(self.cx, self.cy, self.cz)
    }

    pub fn set_center(&mut self, c: Point3) {
        self.cx = c.x;
        self.cy = c.y;
        self.cz = c.z;
    }

    /// y coordinate of the bottom face (largest y, since y points down).
    pub fn bottom_y(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn bev_area(&self) -> f64 {
        self.l * self.w
    }

    /// Oriented containment test, boundary inclusive.
    pub fn contains(&self, p: &Point3) -> bool {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.cx;
        let dz = p.z - self.cz;
        let along = c * dx - s * dz;
        let across = s * dx + c * dz;
        along.abs() <= self.l / 2.0
            && across.abs() <= self.w / 2.0
            && (p.y - self.cy).abs() <= self.h / 2.0
    }
}

/// BEV distance of the box center from the sensor origin.
pub fn planar_range(b: &Box3D) -> f64 {
    b.cx.hypot(b.cz)
}

/// Convex polygon in the (x, z) ground plane, counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct BevPolygon {
    pub vertices: [(f64, f64); 4],
}

impl BevPolygon {
    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }
}

fn rotate(theta: f64, along: f64, across: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * along + s * across, -s * along + c * across)
}

pub fn bev_polygon(b: &Box3D) -> BevPolygon {
    let (hl, hw) = (b.l / 2.0, b.w / 2.0);
    let local = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
    let vertices = local.map(|(a, c)| {
        let (dx, dz) = rotate(b.theta, a, c);
        (b.cx + dx, b.cz + dz)
    });
    BevPolygon { vertices }
}

/// Eight corners; the first four form the bottom face.
pub fn box_corners_3d(b: &Box3D) -> [Point3; 8] {
    let (hl, hw, hh) = (b.l / 2.0, b.w / 2.0, b.h / 2.0);
    let footprint = [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)];
    let mut out = [Point3::default(); 8];
    for (i, &(a, c)) in footprint.iter().enumerate() {
        let (dx, dz) = rotate(b.theta, a, c);
        out[i] = Point3::new(b.cx + dx, b.cy + hh, b.cz + dz);
        out[i + 4] = Point3::new(b.cx + dx, b.cy - hh, b.cz + dz);
    }
    out
}

/// Signed area, positive for counter-clockwise vertex order.
fn shoelace(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice / 2.0
}

fn cross(o: (f64, f64), a: (f64, f64), p: (f64, f64)) -> f64 {
    (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0)
}

fn segment_line_intersection(
    p: (f64, f64),
    q: (f64, f64),
    a: (f64, f64),
    b: (f64, f64),
) -> (f64, f64) {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Sutherland-Hodgman clip of `subject` against the convex CCW `clip` polygon.
pub fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut output: Vec<(f64, f64)> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

/// Area of the BEV footprint intersection.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    // cheap reject on circumscribed circles
    let ra = a.l.hypot(a.w) / 2.0;
    let rb = b.l.hypot(b.w) / 2.0;
    if (a.cx - b.cx).hypot(a.cz - b.cz) > ra + rb {
        return 0.0;
    }
    let pa = bev_polygon(a);
    let pb = bev_polygon(b);
    let area = shoelace(&clip_convex(&pa.vertices, &pb.vertices));
    if area < AREA_EPS {
        0.0
    } else {
        area
    }
}

/// Intersection over union of the two BEV footprints.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.bev_area() + b.bev_area() - inter;
    if union <= AREA_EPS {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
