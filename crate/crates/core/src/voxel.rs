//! Region-of-interest crops around a proposal and the 64x64x9 BEV voxel
//! encoding handed to an external refinement network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_corners_3d, Box3D, Calibration, Point3};

pub const GRID_X: usize = 64;
pub const GRID_Z: usize = 64;
pub const GRID_HEIGHT: usize = 9;
pub const CELLS: usize = GRID_X * GRID_Z * GRID_HEIGHT;
pub const ROI_SCALE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityNormalization {
    /// count / largest count in the grid
    #[default]
    MaxCount,
    /// count / number of points inside the grid
    PointFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoxelConfig {
    /// Physical size (x, height, z) in meters, centered on the proposal.
    pub extent: [f64; 3],
    pub normalization: DensityNormalization,
}

impl Default for VoxelConfig {
    fn default() -> Self {
        Self {
            extent: [4.0, 3.0, 4.0],
            normalization: DensityNormalization::MaxCount,
        }
    }
}

impl VoxelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.extent.iter().all(|e| *e > 0.0 && e.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("voxel extent", "all extents must be positive"))
        }
    }
}

/// Per-cell max height and density, laid out `[x][z][height]`.
///
/// Heights are measured upward (-y in the camera frame) from the grid
/// bottom; empty cells carry `empty_height` (the grid bottom, 0.0).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    /// Minimum corner as (x, up, z) with up = -y.
    pub origin: [f64; 3],
    pub cell_size: [f64; 3],
    pub counts: Vec<u32>,
    pub max_height: Vec<f64>,
    pub density: Vec<f64>,
    pub empty_height: f64,
    pub normalization: DensityNormalization,
}

pub fn cell_index(ix: usize, iz: usize, ih: usize) -> usize {
    (ix * GRID_Z + iz) * GRID_HEIGHT + ih
}

fn bin(offset: f64, cell: f64, n: usize) -> Option<usize> {
    let i = (offset / cell).floor();
    (i >= 0.0 && i < n as f64).then_some(i as usize)
}

impl VoxelGrid {
    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Little-endian `f32` tensor of shape `[2][64][64][9]`:
    /// channel 0 max height, channel 1 density.
    pub fn to_tensor_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 * CELLS * 4);
        for channel in [&self.max_height, &self.density] {
            for v in channel.iter() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn sidecar(&self) -> VoxelSidecar {
        VoxelSidecar {
            shape: [2, GRID_X, GRID_Z, GRID_HEIGHT],
            axis_order: ["channel", "x", "z", "height"].map(String::from).to_vec(),
            channels: ["max_height", "density"].map(String::from).to_vec(),
            dtype: "float32_le".into(),
            origin: self.origin,
            cell_size: self.cell_size,
            empty_height: self.empty_height,
            normalization: self.normalization,
        }
    }
}

/// JSON description of a serialized voxel tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelSidecar {
    pub shape: [usize; 4],
    pub axis_order: Vec<String>,
    pub channels: Vec<String>,
    pub dtype: String,
    /// Minimum corner (x, up, z), camera frame with up = -y.
    pub origin: [f64; 3],
    pub cell_size: [f64; 3],
    pub empty_height: f64,
    pub normalization: DensityNormalization,
}

/// Decodes a tensor written by [`VoxelGrid::to_tensor_bytes`] into
/// (max_height, density) channels.
pub fn tensor_from_bytes(bytes: &[u8]) -> Result<(Vec<f32>, Vec<f32>)> {
    if bytes.len() != 2 * CELLS * 4 {
        return Err(Error::invalid(
            "voxel tensor",
            format!("expected {} bytes, got {}", 2 * CELLS * 4, bytes.len()),
        ));
    }
    let vals: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let (h, d) = vals.split_at(CELLS);
    Ok((h.to_vec(), d.to_vec()))
}

/// Points inside the axis-aligned box of size `extent` (x, y, z) centered on
/// `center`; lower bounds inclusive, upper bounds exclusive.
pub fn crop_cloud(points: &[Point3], center: &Point3, extent: [f64; 3]) -> Vec<Point3> {
    let inside = |d: f64, e: f64| -e / 2.0 <= d && d < e / 2.0;
    points
        .iter()
        .filter(|p| {
            inside(p.x - center.x, extent[0])
                && inside(p.y - center.y, extent[1])
                && inside(p.z - center.z, extent[2])
        })
        .copied()
        .collect()
}

/// Voxelizes camera-frame points into a grid of `config.extent` centered on
/// `center`. Extent order is (x, height, z).
pub fn voxelize(points: &[Point3], center: &Point3, config: &VoxelConfig) -> VoxelGrid {
    let [ex, eh, ez] = config.extent;
    let origin = [center.x - ex / 2.0, -center.y - eh / 2.0, center.z - ez / 2.0];
    let cell_size = [ex / GRID_X as f64, eh / GRID_HEIGHT as f64, ez / GRID_Z as f64];
    let empty_height = 0.0;
    let mut counts = vec![0u32; CELLS];
    let mut max_height = vec![f64::NEG_INFINITY; CELLS];
    for p in points {
        let up = -p.y - origin[1];
        let (Some(ix), Some(ih), Some(iz)) = (
            bin(p.x - origin[0], cell_size[0], GRID_X),
            bin(up, cell_size[1], GRID_HEIGHT),
            bin(p.z - origin[2], cell_size[2], GRID_Z),
        ) else {
            continue;
        };
        let k = cell_index(ix, iz, ih);
        counts[k] += 1;
        max_height[k] = max_height[k].max(up);
    }
    let denom = match config.normalization {
        DensityNormalization::MaxCount => counts.iter().copied().max().unwrap_or(0) as f64,
        DensityNormalization::PointFraction => counts.iter().map(|&c| c as f64).sum(),
    };
    let density = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { c as f64 / denom })
        .collect();
    for (h, &c) in max_height.iter_mut().zip(&counts) {
        if c == 0 {
            *h = empty_height;
        }
    }
    VoxelGrid {
        origin,
        cell_size,
        counts,
        max_height,
        density,
        empty_height,
        normalization: config.normalization,
    }
}

/// Image-space crop rectangle in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl Roi2D {
    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }
}

/// Tight 2D box around the projected corners, scaled by `scale` about its
/// center. Corners behind the camera are skipped.
pub fn projected_roi(b: &Box3D, calib: &Calibration, scale: f64) -> Result<Roi2D> {
    let corners = box_corners_3d(b);
    let mut pts = corners
        .iter()
        .filter_map(|c| calib.project_rect(c))
        .peekable();
    if pts.peek().is_none() {
        return Err(Error::invalid("roi", "box lies entirely behind the camera"));
    }
    let (mut l, mut t, mut r, mut btm) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (u, v) in pts {
        l = l.min(u);
        t = t.min(v);
        r = r.max(u);
        btm = btm.max(v);
    }
    let (cu, cv) = ((l + r) / 2.0, (t + btm) / 2.0);
    let (hw, hh) = ((r - l) * scale / 2.0, (btm - t) * scale / 2.0);
    Ok(Roi2D {
        left: cu - hw,
        top: cv - hh,
        right: cu + hw,
        bottom: cv + hh,
    })
}

/// Projected ROI enlarged by 1.5 and clamped to the image rectangle.
pub fn image_roi(b: &Box3D, calib: &Calibration) -> Result<Roi2D> {
    let roi = projected_roi(b, calib, ROI_SCALE)?;
    let (w, h) = (calib.image_width as f64, calib.image_height as f64);
    let left = roi.left.clamp(0.0, w);
    let top = roi.top.clamp(0.0, h);
    Ok(Roi2D {
        left,
        top,
        right: roi.right.clamp(left, w),
        bottom: roi.bottom.clamp(top, h),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitti_io::synthetic_calibration;

    fn center() -> Point3 {
        Point3::new(1.0, 0.5, 20.0)
    }

    #[test]
    fn empty_grid() {
        let g = voxelize(&[], &center(), &VoxelConfig::default());
        assert_eq!(g.counts.len(), CELLS);
        assert!(g.density.iter().all(|&d| d == 0.0));
        assert!(g.max_height.iter().all(|&h| h == g.empty_height));
    }

    #[test]
    fn single_point() {
        let c = center();
        let p = Point3::new(1.1, 0.2, 20.3);
        let g = voxelize(&[p], &c, &VoxelConfig::default());
        assert_eq!(g.occupied(), 1);
        let k = g.counts.iter().position(|&n| n == 1).unwrap();
        assert_eq!(g.density[k], 1.0);
        // 0.3 m above the center, grid bottom 1.5 m below it
        assert!((g.max_height[k] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn max_count_normalization() {
        let c = center();
        let a = Point3::new(1.01, 0.51, 20.01);
        let b = Point3::new(1.02, 0.52, 20.02);
        let far = Point3::new(0.0, 0.0, 19.0);
        let g = voxelize(&[a, b, far], &c, &VoxelConfig::default());
        let mut d: Vec<f64> = g.density.iter().copied().filter(|&d| d > 0.0).collect();
        d.sort_by(f64::total_cmp);
        assert_eq!(d, vec![0.5, 1.0]);

        let frac = VoxelConfig {
            normalization: DensityNormalization::PointFraction,
            ..Default::default()
        };
        let g = voxelize(&[a, b, far], &c, &frac);
        let total: f64 = g.density.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_grid_points_ignored() {
        let c = center();
        let g = voxelize(&[Point3::new(3.0, 0.5, 20.0), Point3::new(1.0, 0.5, 22.0)], &c, &VoxelConfig::default());
        // x = 3.0 is exactly on the upper bound (exclusive), z likewise
        assert_eq!(g.total_count(), 0);
        let g = voxelize(&[Point3::new(-1.0, 0.5, 18.0)], &c, &VoxelConfig::default());
        assert_eq!(g.total_count(), 1, "lower bound inclusive");
    }

    #[test]
    fn crop_bounds() {
        let c = center();
        let e = [4.0, 3.0, 4.0];
        assert_eq!(crop_cloud(&[c], &c, e).len(), 1);
        let edge = Point3::new(c.x + 2.0, c.y, c.z);
        assert!(crop_cloud(&[edge], &c, e).is_empty());
        let low = Point3::new(c.x - 2.0, c.y - 1.5, c.z - 2.0);
        assert_eq!(crop_cloud(&[low], &c, e).len(), 1);
    }

    #[test]
    fn tensor_layout() {
        let c = center();
        let p = Point3::new(1.1, 0.2, 20.3);
        let g = voxelize(&[p], &c, &VoxelConfig::default());
        let bytes = g.to_tensor_bytes();
        assert_eq!(bytes.len(), 2 * 64 * 64 * 9 * 4);
        let (h, d) = tensor_from_bytes(&bytes).unwrap();
        let ix = ((1.1 - (1.0 - 2.0)) / 0.0625f64).floor() as usize;
        let iz = ((20.3 - 18.0) / 0.0625f64).floor() as usize;
        let ih = (1.8 / (3.0 / 9.0f64)).floor() as usize;
        let k = cell_index(ix, iz, ih);
        assert_eq!(d[k], 1.0);
        assert_eq!(h[k], 1.8f64 as f32);
        assert!(tensor_from_bytes(&bytes[1..]).is_err());
        let side = serde_json::to_value(g.sidecar()).unwrap();
        assert_eq!(side["shape"], serde_json::json!([2, 64, 64, 9]));
    }

    #[test]
    fn roi_scaling_and_clamping() {
        let calib = synthetic_calibration(1242, 375);
        let b = Box3D::new(Point3::new(0.0, 0.0, 20.0), 0.84, 0.66, 1.76, 0.4).unwrap();
        let tight = projected_roi(&b, &calib, 1.0).unwrap();
        let wide = projected_roi(&b, &calib, ROI_SCALE).unwrap();
        assert!((wide.width() - 1.5 * tight.width()).abs() < 1e-9);
        assert!((wide.height() - 1.5 * tight.height()).abs() < 1e-9);
        assert_eq!(image_roi(&b, &calib).unwrap(), wide, "fits inside the image");

        // on the optical axis the ROI is centered on the principal point
        let axis = Box3D::new(Point3::new(0.0, 0.0, 15.0), 1.0, 1.0, 1.0, 0.0).unwrap();
        let roi = image_roi(&axis, &calib).unwrap();
        assert!(((roi.left + roi.right) / 2.0 - 609.5593).abs() < 1e-9);
        assert!(((roi.top + roi.bottom) / 2.0 - 172.854).abs() < 1e-9);

        let near = Box3D::new(Point3::new(0.0, 0.0, 2.0), 2.0, 2.0, 2.0, 0.0).unwrap();
        let roi = image_roi(&near, &calib).unwrap();
        assert_eq!((roi.left, roi.top, roi.right, roi.bottom), (0.0, 0.0, 1242.0, 375.0));

        let behind = Box3D::new(Point3::new(0.0, 0.0, -10.0), 1.0, 1.0, 1.0, 0.0).unwrap();
        assert!(image_roi(&behind, &calib).is_err());
    }
}
