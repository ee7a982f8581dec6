use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::curve::{
    average_precision, best_f1, collect_outcomes, pr_curve, BestF1, FrameObjects, Interpolation,
};
use super::matching::{EvalObject, MatchCriterion};
use crate::error::{Error, Result};
use crate::geometry::{planar_range, Box3D};
use crate::kitti_io::LabelRecord;

/// Half-open range intervals on BEV distance. The last bin is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RangeBins {
    edges: Vec<f64>,
}

impl RangeBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::invalid("range bins", "need at least one edge"));
        }
        if edges.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::invalid("range bins", "edges must be finite and non-negative"));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("range bins", "edges must be strictly increasing"));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(lo, hi)` of bin `i`; `hi` is infinite for the last bin.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges.get(i + 1).copied().unwrap_or(f64::INFINITY))
    }

    pub fn bin_of(&self, range: f64) -> Option<usize> {
        if range < self.edges[0] || range.is_nan() {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= range) - 1)
    }

    pub fn label(&self, i: usize) -> String {
        match self.bounds(i) {
            (lo, hi) if hi.is_infinite() => format!("{lo}+"),
            (lo, hi) => format!("{lo}-{hi}"),
        }
    }
}

impl Default for RangeBins {
    fn default() -> Self {
        Self {
            edges: vec![0.0, 10.0, 20.0, 30.0],
        }
    }
}

impl TryFrom<Vec<f64>> for RangeBins {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RangeBins> for Vec<f64> {
    fn from(b: RangeBins) -> Self {
        b.edges
    }
}

/// Ground-truth filter on 2D box height, occlusion level and truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Difficulty {
    pub name: String,
    pub min_bbox_height: f64,
    pub max_occlusion: i32,
    pub max_truncation: f64,
}

impl Difficulty {
    pub fn easy() -> Self {
        Self::preset("easy", 40.0, 0, 0.15)
    }

    pub fn moderate() -> Self {
        Self::preset("moderate", 25.0, 1, 0.30)
    }

    pub fn hard() -> Self {
        Self::preset("hard", 25.0, 2, 0.50)
    }

    pub fn presets() -> Vec<Self> {
        vec![Self::easy(), Self::moderate(), Self::hard()]
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "easy" => Ok(Self::easy()),
            "moderate" => Ok(Self::moderate()),
            "hard" => Ok(Self::hard()),
            other => Err(Error::Config(format!("unknown difficulty `{other}`"))),
        }
    }

    fn preset(name: &str, h: f64, occ: i32, trunc: f64) -> Self {
        Self {
            name: name.to_owned(),
            min_bbox_height: h,
            max_occlusion: occ,
            max_truncation: trunc,
        }
    }

    pub fn accepts(&self, r: &LabelRecord) -> bool {
        r.bbox_height() >= self.min_bbox_height
            && r.occluded <= self.max_occlusion
            && r.truncated <= self.max_truncation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub bins: RangeBins,
    /// Criterion for AP.
    pub ap_criterion: MatchCriterion,
    /// Criterion for the best-F1 operating point and center error.
    pub f1_criterion: MatchCriterion,
    pub difficulties: Vec<Difficulty>,
    pub class: String,
    /// Ground truths of these classes are ignored rather than dropped.
    pub neighbor_classes: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bins: RangeBins::default(),
            ap_criterion: MatchCriterion::default(),
            f1_criterion: MatchCriterion {
                mode: super::MatchMode::Euclidean3d,
                threshold: 1.0,
            },
            difficulties: Difficulty::presets(),
            class: "Pedestrian".into(),
            neighbor_classes: vec!["Person_sitting".into(), "Cyclist".into()],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.ap_criterion.validated()?;
        self.f1_criterion.validated()?;
        RangeBins::new(self.bins.edges.clone())?;
        if self.difficulties.is_empty() {
            return Err(Error::Config("no difficulty selected".into()));
        }
        Ok(())
    }
}

/// Ground truth and predictions of one frame, in KITTI label form.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalFrame {
    pub frame_id: String,
    pub ground_truth: Vec<LabelRecord>,
    pub detections: Vec<LabelRecord>,
}

fn boxed(r: &LabelRecord, frame: &str) -> Result<Box3D> {
    r.to_box().map_err(|e| e.in_frame(frame))
}

/// Filters one frame for a difficulty: target-class ground truths failing
/// the filter and neighbor classes become ignored; DontCare and other
/// classes are dropped. Detections below the minimum 2D height are ignored.
pub fn frame_objects(frame: &EvalFrame, cfg: &EvalConfig, diff: &Difficulty) -> Result<FrameObjects> {
    let is = |kind: &str, class: &str| kind.eq_ignore_ascii_case(class);
    let mut gts = Vec::new();
    for r in &frame.ground_truth {
        if r.is_dont_care() {
            continue;
        }
        if is(&r.kind, &cfg.class) {
            gts.push(EvalObject {
                bbox: boxed(r, &frame.frame_id)?,
                ignored: !diff.accepts(r),
            });
        } else if cfg.neighbor_classes.iter().any(|c| is(&r.kind, c)) {
            gts.push(EvalObject::ignored(boxed(r, &frame.frame_id)?));
        }
    }
    let mut dets = Vec::new();
    for r in &frame.detections {
        if is(&r.kind, &cfg.class) {
            dets.push(EvalObject {
                bbox: boxed(r, &frame.frame_id)?,
                ignored: r.bbox_height() < diff.min_bbox_height,
            });
        }
    }
    Ok(FrameObjects::new(dets, gts))
}

/// Keeps boxes whose planar range lies in `[lo, hi)`, on both sides.
pub fn restrict_to_range(frames: &[FrameObjects], lo: f64, hi: f64) -> Vec<FrameObjects> {
    let keep = |o: &&EvalObject| {
        let r = planar_range(&o.bbox);
        r >= lo && r < hi
    };
    frames
        .iter()
        .map(|f| FrameObjects {
            dets: f.dets.iter().filter(keep).copied().collect(),
            gts: f.gts.iter().filter(keep).copied().collect(),
        })
        .collect()
}

/// AP and best-F1 statistics of one set of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub n_gt: usize,
    pub n_det: usize,
    pub ap: Option<f64>,
    pub ap_11pt: Option<f64>,
    pub best_f1: BestF1,
}

pub fn evaluate_objects(
    frames: &[FrameObjects],
    ap_criterion: &MatchCriterion,
    f1_criterion: &MatchCriterion,
) -> CellMetrics {
    let ap_curve = pr_curve(&collect_outcomes(frames, ap_criterion));
    let f1_curve = pr_curve(&collect_outcomes(frames, f1_criterion));
    CellMetrics {
        n_gt: ap_curve.n_gt,
        n_det: frames.iter().map(|f| f.dets.iter().filter(|d| !d.ignored).count()).sum(),
        ap: average_precision(&ap_curve, Interpolation::Points40),
        ap_11pt: average_precision(&ap_curve, Interpolation::Points11),
        best_f1: best_f1(&f1_curve),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub difficulty: String,
    /// Bin label, or `all`.
    pub range: String,
    pub lo: f64,
    /// `None` for an unbounded bin.
    pub hi: Option<f64>,
    /// No non-ignored ground truth in the cell; AP is undefined.
    pub empty: bool,
    #[serde(flatten)]
    pub metrics: CellMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub n_frames: usize,
    /// Frames left out by the caller, e.g. for missing predictions.
    pub skipped_frames: Vec<String>,
    pub cells: Vec<EvalCell>,
}

/// Per difficulty, AP and best-F1 statistics for each range bin and for
/// all ranges. Frames are ordered by id first so score ties resolve by
/// frame id and then input order.
pub fn range_binned_map(frames: &[EvalFrame], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let mut order: Vec<&EvalFrame> = frames.iter().collect();
    order.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    let mut cells = Vec::new();
    for diff in &cfg.difficulties {
        let objs = order
            .iter()
            .map(|f| frame_objects(f, cfg, diff))
            .collect::<Result<Vec<_>>>()?;
        let mut push = |range: String, lo: f64, hi: f64, set: &[FrameObjects]| {
            let metrics = evaluate_objects(set, &cfg.ap_criterion, &cfg.f1_criterion);
            cells.push(EvalCell {
                difficulty: diff.name.clone(),
                range,
                lo,
                hi: hi.is_finite().then_some(hi),
                empty: metrics.n_gt == 0,
                metrics,
            });
        };
        for i in 0..cfg.bins.len() {
            let (lo, hi) = cfg.bins.bounds(i);
            push(cfg.bins.label(i), lo, hi, &restrict_to_range(&objs, lo, hi));
        }
        push("all".into(), 0.0, f64::INFINITY, &objs);
    }
    Ok(EvalReport {
        config: cfg.clone(),
        n_frames: frames.len(),
        skipped_frames: Vec::new(),
        cells,
    })
}

impl EvalReport {
    pub fn cell(&self, difficulty: &str, range: &str) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.difficulty == difficulty && c.range == range)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from(
            "difficulty,range,lo,hi,n_gt,n_det,ap,ap_11pt,precision,recall,f1,threshold,mean_error,tp,fp,fn\n",
        );
        for c in &self.cells {
            let m = &c.metrics;
            let f = &m.best_f1;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.difficulty,
                c.range,
                c.lo,
                opt(c.hi),
                m.n_gt,
                m.n_det,
                opt(m.ap),
                opt(m.ap_11pt),
                f.precision,
                f.recall,
                f.f1,
                opt(f.threshold),
                opt(f.mean_error),
                f.tp,
                f.fp,
                f.fn_
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn ped(x: f64, z: f64, score: Option<f64>) -> LabelRecord {
        let b = Box3D::new(Point3::new(x, 0.8, z), 0.8, 0.6, 1.7, 0.3).unwrap();
        LabelRecord::from_box("Pedestrian", &b, [100.0, 100.0, 140.0, 200.0], score)
    }

    fn corpus() -> Vec<EvalFrame> {
        let zs = [5.0, 15.0, 25.0, 35.0, 45.0];
        (0..4)
            .map(|k| {
                let gt: Vec<_> = zs.iter().map(|&z| ped(k as f64, z, None)).collect();
                let det = gt
                    .iter()
                    .enumerate()
                    .map(|(i, g)| {
                        let mut d = g.clone();
                        d.score = Some(0.9 - 0.01 * i as f64);
                        d
                    })
                    .collect();
                EvalFrame {
                    frame_id: format!("{k:06}"),
                    ground_truth: gt,
                    detections: det,
                }
            })
            .collect()
    }

    #[test]
    fn bins_partition() {
        let b = RangeBins::default();
        assert_eq!(b.bin_of(0.0), Some(0));
        assert_eq!(b.bin_of(9.999), Some(0));
        assert_eq!(b.bin_of(10.0), Some(1));
        assert_eq!(b.bin_of(30.0), Some(3));
        assert_eq!(b.bin_of(1e6), Some(3));
        assert_eq!(b.label(3), "30+");
        assert_eq!(b.label(1), "10-20");
        assert!(RangeBins::new(vec![0.0, 10.0, 10.0]).is_err());
        assert!(RangeBins::new(vec![]).is_err());
        let j = serde_json::to_string(&b).unwrap();
        assert_eq!(j, "[0.0,10.0,20.0,30.0]");
        assert!(serde_json::from_str::<RangeBins>("[5.0,1.0]").is_err());
    }

    #[test]
    fn self_match_is_perfect() {
        let frames: Vec<_> = corpus()
            .into_iter()
            .map(|mut f| {
                f.detections = f.ground_truth.iter().cloned().map(|mut r| {
                    r.score = Some(1.0);
                    r
                }).collect();
                f
            })
            .collect();
        let rep = range_binned_map(&frames, &EvalConfig::default()).unwrap();
        assert_eq!(rep.cells.len(), 3 * 5);
        for c in &rep.cells {
            assert_eq!(c.metrics.ap, Some(1.0), "{} {}", c.difficulty, c.range);
            assert_eq!(c.metrics.best_f1.f1, 1.0);
            assert_eq!(c.metrics.best_f1.mean_error, Some(0.0));
        }
    }

    #[test]
    fn removing_far_detections_isolates_bins() {
        let cfg = EvalConfig::default();
        let full = range_binned_map(&corpus(), &cfg).unwrap();
        let cut: Vec<_> = corpus()
            .into_iter()
            .map(|mut f| {
                f.detections.retain(|d| planar_range(&d.to_box().unwrap()) < 30.0);
                f
            })
            .collect();
        let cut = range_binned_map(&cut, &cfg).unwrap();
        for r in ["0-10", "10-20", "20-30"] {
            assert_eq!(full.cell("moderate", r), cut.cell("moderate", r));
        }
        assert_eq!(full.cell("moderate", "30+").unwrap().metrics.ap, Some(1.0));
        assert_eq!(cut.cell("moderate", "30+").unwrap().metrics.ap, Some(0.0));
    }

    #[test]
    fn long_range_only_flags_empty_bins() {
        let frames = vec![EvalFrame {
            frame_id: "a".into(),
            ground_truth: vec![ped(0.0, 35.0, None)],
            detections: vec![ped(0.0, 35.0, Some(0.7))],
        }];
        let rep = range_binned_map(&frames, &EvalConfig::default()).unwrap();
        let c = rep.cell("easy", "30+").unwrap();
        assert_eq!((c.empty, c.metrics.ap), (false, Some(1.0)));
        let c = rep.cell("easy", "0-10").unwrap();
        assert!(c.empty && c.metrics.ap.is_none());
    }

    #[test]
    fn difficulty_and_neighbor_ignore() {
        let mut small = ped(0.0, 15.0, None);
        small.bbox = [100.0, 100.0, 120.0, 130.0]; // 30 px tall
        let mut sitting = ped(3.0, 15.0, None);
        sitting.kind = "Person_sitting".into();
        let mut car = ped(6.0, 15.0, None);
        car.kind = "Car".into();
        let mut dc = ped(0.0, 0.0, None);
        dc.kind = "DontCare".into();
        let dets = vec![
            ped(0.0, 15.0, Some(0.9)),
            ped(3.0, 15.0, Some(0.8)),
            ped(6.0, 15.0, Some(0.7)),
        ];
        let f = EvalFrame {
            frame_id: "x".into(),
            ground_truth: vec![small, sitting, car, dc],
            detections: dets,
        };
        let cfg = EvalConfig::default();
        let easy = frame_objects(&f, &cfg, &Difficulty::easy()).unwrap();
        assert_eq!(easy.gts.len(), 2);
        assert!(easy.gts.iter().all(|g| g.ignored));
        let mod_ = frame_objects(&f, &cfg, &Difficulty::moderate()).unwrap();
        assert_eq!(mod_.n_valid_gt(), 1);
        // one TP, sitting absorbs one, the car-position detection is an FP
        let out = super::super::collect_outcomes(&[mod_], &cfg.ap_criterion);
        let kinds: Vec<_> = out.items.iter().map(|o| (o.det, o.is_tp())).collect();
        assert_eq!(kinds, vec![(0, true), (2, false)]);
        let rep = range_binned_map(&[f], &cfg).unwrap();
        let m = &rep.cell("moderate", "all").unwrap().metrics;
        assert_eq!((m.best_f1.tp, m.best_f1.fp, m.best_f1.threshold), (1, 0, Some(0.9)));
        assert!(rep.cell("easy", "all").unwrap().empty);
    }

    #[test]
    fn csv_shape() {
        let rep = range_binned_map(&corpus(), &EvalConfig::default()).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 15);
        assert!(lines.iter().all(|l| l.split(',').count() == 16));
        assert!(lines[4].starts_with("easy,30+,30,,"));
    }
}
