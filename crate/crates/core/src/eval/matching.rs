use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, Box3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    BevIou,
    Euclidean3d,
}

/// How a detection is tested against a ground truth: BEV IoU at or above
/// the threshold, or 3D center distance at or below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCriterion {
    pub mode: MatchMode,
    pub threshold: f64,
}

impl MatchCriterion {
    pub fn bev_iou(threshold: f64) -> Result<Self> {
        Self {
            mode: MatchMode::BevIou,
            threshold,
        }
        .validated()
    }

    pub fn euclidean(threshold: f64) -> Result<Self> {
        Self {
            mode: MatchMode::Euclidean3d,
            threshold,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = self.threshold > 0.0
            && self.threshold.is_finite()
            && (self.mode == MatchMode::Euclidean3d || self.threshold <= 1.0);
        if ok {
            Ok(self)
        } else {
            Err(Error::invalid(
                "match criterion",
                format!("threshold {} out of range for {:?}", self.threshold, self.mode),
            ))
        }
    }

    /// Similarity (larger is better) if the pair qualifies.
    pub fn similarity(&self, det: &Box3D, gt: &Box3D) -> Option<f64> {
        match self.mode {
            MatchMode::BevIou => {
                let iou = bev_iou(det, gt);
                (iou >= self.threshold).then_some(iou)
            }
            MatchMode::Euclidean3d => {
                let d = det.center().distance(&gt.center());
                (d <= self.threshold).then_some(-d)
            }
        }
    }
}

impl Default for MatchCriterion {
    fn default() -> Self {
        Self {
            mode: MatchMode::BevIou,
            threshold: 0.5,
        }
    }
}

/// A box taking part in evaluation. Ignored ground truths neither count as
/// misses nor yield true positives; ignored detections are skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalObject {
    pub bbox: Box3D,
    pub ignored: bool,
}

impl EvalObject {
    pub fn valid(bbox: Box3D) -> Self {
        Self { bbox, ignored: false }
    }

    pub fn ignored(bbox: Box3D) -> Self {
        Self { bbox, ignored: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub det: usize,
    pub gt: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatch {
    pub matches: Vec<Match>,
    /// False positives.
    pub unmatched_dets: Vec<usize>,
    /// Misses among non-ignored ground truths.
    pub unmatched_gts: Vec<usize>,
    /// Detections that are ignored or absorbed by an ignored ground truth.
    pub ignored_dets: Vec<usize>,
}

/// Detection indices by descending score, ties by input order.
pub fn score_order(dets: &[EvalObject]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].bbox.score.total_cmp(&dets[a].bbox.score).then(a.cmp(&b)));
    order
}

fn best_unused(
    det: &Box3D,
    gts: &[EvalObject],
    used: &[bool],
    want_ignored: bool,
    criterion: &MatchCriterion,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, gt) in gts.iter().enumerate() {
        if used[j] || gt.ignored != want_ignored {
            continue;
        }
        if let Some(s) = criterion.similarity(det, &gt.bbox) {
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((j, s));
            }
        }
    }
    best
}

/// Greedy one-to-one matching in descending detection score. Each detection
/// takes the most similar unused valid ground truth; failing that, an
/// unused ignored ground truth absorbs it.
pub fn match_frame(dets: &[EvalObject], gts: &[EvalObject], criterion: &MatchCriterion) -> FrameMatch {
    let mut used = vec![false; gts.len()];
    let mut out = FrameMatch::default();
    for i in score_order(dets) {
        let det = &dets[i];
        if det.ignored {
            out.ignored_dets.push(i);
            continue;
        }
        if let Some((j, similarity)) = best_unused(&det.bbox, gts, &used, false, criterion) {
            used[j] = true;
            out.matches.push(Match { det: i, gt: j, similarity });
        } else if let Some((j, _)) = best_unused(&det.bbox, gts, &used, true, criterion) {
            used[j] = true;
            out.ignored_dets.push(i);
        } else {
            out.unmatched_dets.push(i);
        }
    }
    out.unmatched_gts = (0..gts.len()).filter(|&j| !used[j] && !gts[j].ignored).collect();
    out
}
