use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::report::RangeBins;
use crate::error::Result;
use crate::geometry::{planar_range, Box3D, Point3};
use crate::kitti_io::{Frame, InstanceMaskSet, LabelRecord};

/// Mean and percentiles (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (i, frac) = (pos.floor() as usize, pos.fract());
            match v.get(i + 1) {
                Some(next) => v[i] + (next - v[i]) * frac,
                None => v[i],
            }
        };
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p10: q(0.1),
            p50: q(0.5),
            p90: q(0.9),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub range: String,
    pub lo: f64,
    pub hi: Option<f64>,
    pub n_objects: usize,
    /// LiDAR points inside each ground-truth box.
    pub points: Option<Summary>,
    /// Area of each 2D label box in pixels.
    pub box_pixels: Option<Summary>,
    /// Pixels of the instance mask assigned to each object, when masks exist.
    pub mask_pixels: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub class: String,
    pub n_frames: usize,
    pub bins: Vec<BinStats>,
    pub all: BinStats,
    /// Mean (h, w, l) per labelled class.
    pub class_mean_dims: BTreeMap<String, [f64; 3]>,
    pub class_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ObjectStat {
    range: f64,
    points: f64,
    box_pixels: f64,
    mask_pixels: Option<f64>,
}

fn bbox_columns(lo: f64, hi: f64) -> (i64, i64) {
    // pixels whose centers lie in [lo, hi]
    ((lo - 0.5).ceil() as i64, (hi - 0.5).floor() as i64)
}

/// Pixels of `mask` whose centers fall inside a 2D label box.
fn pixels_in_bbox(runs: &[[u64; 2]], width: u32, bbox: [f64; 4]) -> u64 {
    let w = width as u64;
    let (u0, u1) = bbox_columns(bbox[0], bbox[2]);
    let (v0, v1) = bbox_columns(bbox[1], bbox[3]);
    let mut n = 0;
    for &[start, len] in runs {
        let mut idx = start;
        let end = start + len;
        while idx < end {
            let (v, u) = ((idx / w) as i64, (idx % w) as i64);
            let row_end = ((idx / w) + 1) * w;
            let seg_end = end.min(row_end);
            let seg_u1 = u + (seg_end - idx) as i64 - 1;
            if v >= v0 && v <= v1 {
                let lo = u.max(u0);
                let hi = seg_u1.min(u1);
                if hi >= lo {
                    n += (hi - lo + 1) as u64;
                }
            }
            idx = seg_end;
        }
    }
    n
}

/// Greedy one-to-one assignment of instances to labels by the number of
/// mask pixels inside the label box; an instance needs at least half of its
/// pixels inside. Returns mask pixel counts indexed like `labels`.
fn assign_masks(masks: &InstanceMaskSet, labels: &[LabelRecord]) -> Vec<Option<u64>> {
    let mut pairs = Vec::new();
    for (i, inst) in masks.instances.iter().enumerate() {
        let total = inst.pixel_count();
        for (j, l) in labels.iter().enumerate() {
            if l.is_dont_care() {
                continue;
            }
            let inside = pixels_in_bbox(&inst.rle, masks.image_width, l.bbox);
            if inside > 0 && 2 * inside >= total {
                pairs.push((inside, i, j, total));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_inst = vec![false; masks.instances.len()];
    let mut out = vec![None; labels.len()];
    for (_, i, j, total) in pairs {
        if !used_inst[i] && out[j].is_none() {
            used_inst[i] = true;
            out[j] = Some(total);
        }
    }
    out
}

fn frame_objects(frame: &Frame, class: &str) -> Result<Vec<ObjectStat>> {
    let Some(labels) = &frame.labels else {
        return Ok(Vec::new());
    };
    let pts: Vec<Point3> = frame.calib.cloud_to_rect(&frame.cloud);
    let masks = frame.masks.as_ref().map(|m| assign_masks(m, labels));
    let mut out = Vec::new();
    for (j, l) in labels.iter().enumerate() {
        if !l.kind.eq_ignore_ascii_case(class) {
            continue;
        }
        let b: Box3D = l.to_box().map_err(|e| e.in_frame(&frame.frame_id))?;
        out.push(ObjectStat {
            range: planar_range(&b),
            points: pts.iter().filter(|p| b.contains(p)).count() as f64,
            box_pixels: (l.bbox[2] - l.bbox[0]) * (l.bbox[3] - l.bbox[1]),
            mask_pixels: masks.as_ref().and_then(|m| m[j]).map(|n| n as f64),
        });
    }
    Ok(out)
}

fn bin_stats(range: String, lo: f64, hi: f64, objs: &[&ObjectStat], has_masks: bool) -> BinStats {
    let col = |f: fn(&ObjectStat) -> Option<f64>| -> Vec<f64> { objs.iter().filter_map(|o| f(o)).collect() };
    BinStats {
        range,
        lo,
        hi: hi.is_finite().then_some(hi),
        n_objects: objs.len(),
        points: Summary::of(&col(|o| Some(o.points))),
        box_pixels: Summary::of(&col(|o| Some(o.box_pixels))),
        mask_pixels: if has_masks {
            Summary::of(&col(|o| o.mask_pixels))
        } else {
            None
        },
    }
}

/// Per range bin: points inside each ground-truth box of `class`, label box
/// areas and assigned mask sizes. Frames without labels contribute nothing.
pub fn dataset_stats(frames: &[Frame], bins: &RangeBins, class: &str) -> Result<DatasetStats> {
    let mut objs = Vec::new();
    let mut dims: BTreeMap<String, ([f64; 3], usize)> = BTreeMap::new();
    for f in frames {
        objs.extend(frame_objects(f, class)?);
        for l in f.labels.iter().flatten().filter(|l| !l.is_dont_care()) {
            let e = dims.entry(l.kind.clone()).or_insert(([0.0; 3], 0));
            for k in 0..3 {
                e.0[k] += l.dims[k];
            }
            e.1 += 1;
        }
    }
    let has_masks = frames.iter().any(|f| f.masks.is_some());
    let bin_list = (0..bins.len())
        .map(|i| {
            let (lo, hi) = bins.bounds(i);
            let sel: Vec<&ObjectStat> = objs.iter().filter(|o| o.range >= lo && o.range < hi).collect();
            bin_stats(bins.label(i), lo, hi, &sel, has_masks)
        })
        .collect();
    let all: Vec<&ObjectStat> = objs.iter().collect();
    Ok(DatasetStats {
        class: class.to_owned(),
        n_frames: frames.len(),
        bins: bin_list,
        all: bin_stats("all".into(), 0.0, f64::INFINITY, &all, has_masks),
        class_counts: dims.iter().map(|(k, v)| (k.clone(), v.1)).collect(),
        class_mean_dims: dims
            .into_iter()
            .map(|(k, (s, n))| (k, s.map(|x| x / n as f64)))
            .collect(),
    })
}

impl DatasetStats {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let sum = |s: &Option<Summary>| match s {
            Some(s) => format!("{},{},{},{},{}", s.n, s.mean, s.p10, s.p50, s.p90),
            None => ",,,,".to_owned(),
        };
        let mut out = String::from(
            "range,lo,hi,n_objects,points_n,points_mean,points_p10,points_p50,points_p90,\
             box_n,box_mean,box_p10,box_p50,box_p90,mask_n,mask_mean,mask_p10,mask_p50,mask_p90\n",
        );
        for b in self.bins.iter().chain(std::iter::once(&self.all)) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                b.range,
                b.lo,
                opt(b.hi),
                b.n_objects,
                sum(&b.points),
                sum(&b.box_pixels),
                sum(&b.mask_pixels)
            ));
        }
        out
    }
}
