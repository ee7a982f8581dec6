//! Instance-mask driven proposal generation.
//!
//! Every LiDAR point whose projection falls on an instance mask becomes a
//! mean-sized, sensor-aligned box centered on that point. Suppression then
//! runs independently inside each instance, so two detected instances always
//! keep at least one proposal each.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, project_points, Box3D, Point3};
use crate::kitti_io::Frame;

pub const DEFAULT_NMS_IOU: f64 = 0.5;

/// Class-mean box dimensions, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanBoxConfig {
    pub l: f64,
    pub w: f64,
    pub h: f64,
}

impl Default for MeanBoxConfig {
    /// Pedestrian means over the KITTI training labels; recompute with
    /// `lrpd stats` for other data.
    fn default() -> Self {
        Self {
            l: 0.84,
            w: 0.66,
            h: 1.76,
        }
    }
}

impl MeanBoxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l > 0.0 && self.w > 0.0 && self.h > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("mean box", "dimensions must be positive"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub point_index: usize,
    pub instance_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub instance_id: u32,
    /// Number of points assigned to this proposal's instance.
    pub inlier_count: usize,
    /// Points of the same instance that fall inside this box; the NMS score.
    pub support: usize,
    pub source_point_index: usize,
}

/// Maps every in-image point onto the instance whose mask covers its pixel.
/// Points off all masks are dropped. Output is ordered by point index.
pub fn assign_points_to_instances(frame: &Frame) -> Vec<Assignment> {
    let Some(masks) = &frame.masks else {
        return Vec::new();
    };
    if masks.instances.is_empty() {
        return Vec::new();
    }
    let raster = masks.rasterize();
    project_points(&frame.cloud, &frame.calib)
        .into_iter()
        .filter_map(|p| {
            let (u, v) = p.pixel();
            raster.get(u, v).map(|instance_id| Assignment {
                point_index: p.point_index,
                instance_id,
            })
        })
        .collect()
}

/// One proposal per assigned point. `points` are camera-frame positions
/// indexed like the cloud.
pub fn generate_proposals(
    assignments: &[Assignment],
    points: &[Point3],
    mean_box: &MeanBoxConfig,
) -> Vec<Proposal> {
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for a in assignments {
        members.entry(a.instance_id).or_default().push(a.point_index);
    }
    assignments
        .iter()
        .map(|a| {
            let center = points[a.point_index];
            let mut bbox = Box3D {
                cx: center.x,
                cy: center.y,
                cz: center.z,
                l: mean_box.l,
                w: mean_box.w,
                h: mean_box.h,
                theta: 0.0,
                class_id: 0,
                score: 1.0,
            };
            let same = &members[&a.instance_id];
            let support = same.iter().filter(|&&i| bbox.contains(&points[i])).count();
            bbox.score = support as f64 / same.len() as f64;
            Proposal {
                bbox,
                instance_id: a.instance_id,
                inlier_count: same.len(),
                support,
                source_point_index: a.point_index,
            }
        })
        .collect()
}

/// Greedy BEV suppression run separately per instance. Candidates are ranked
/// by support (descending) then source point index (ascending); a candidate
/// is dropped when its IoU with an already kept box reaches `iou_threshold`.
/// Output is grouped by ascending instance id, in rank order.
pub fn instance_nms(proposals: &[Proposal], iou_threshold: f64) -> Vec<Proposal> {
    let mut groups: BTreeMap<u32, Vec<&Proposal>> = BTreeMap::new();
    for p in proposals {
        groups.entry(p.instance_id).or_default().push(p);
    }
    let mut out = Vec::new();
    for (_, mut group) in groups {
        group.sort_by(|a, b| {
            b.support
                .cmp(&a.support)
                .then(a.source_point_index.cmp(&b.source_point_index))
        });
        let mut kept: Vec<&Proposal> = Vec::new();
        for cand in group {
            if kept.iter().all(|k| bev_iou(&k.bbox, &cand.bbox) < iou_threshold) {
                kept.push(cand);
            }
        }
        out.extend(kept.into_iter().copied());
    }
    out
}

/// The full four-step pipeline on one frame.
pub fn propose_frame(frame: &Frame, mean_box: &MeanBoxConfig, iou_threshold: f64) -> Vec<Proposal> {
    let assignments = assign_points_to_instances(frame);
    if assignments.is_empty() {
        return Vec::new();
    }
    let points = frame.calib.cloud_to_rect(&frame.cloud);
    instance_nms(&generate_proposals(&assignments, &points, mean_box), iou_threshold)
}

/// Survivors per instance id.
pub fn survivors_per_instance(proposals: &[Proposal]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for p in proposals {
        *counts.entry(p.instance_id).or_insert(0) += 1;
    }
    counts
}
