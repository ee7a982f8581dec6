use serde::{Deserialize, Serialize};

use super::matching::{match_frame, EvalObject, MatchCriterion};

/// Detections and ground truths of one frame, already filtered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameObjects {
    pub dets: Vec<EvalObject>,
    pub gts: Vec<EvalObject>,
}

impl FrameObjects {
    pub fn new(dets: Vec<EvalObject>, gts: Vec<EvalObject>) -> Self {
        Self { dets, gts }
    }

    pub fn n_valid_gt(&self) -> usize {
        self.gts.iter().filter(|g| !g.ignored).count()
    }
}

/// A counted detection after matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub score: f64,
    pub frame: usize,
    pub det: usize,
    /// Center distance to the matched ground truth for true positives.
    pub error: Option<f64>,
}

impl Outcome {
    pub fn is_tp(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcomes {
    /// Sorted by score descending, then frame, then detection index.
    pub items: Vec<Outcome>,
    pub n_gt: usize,
}

/// Matches every frame and pools the counted detections. Ignored and
/// absorbed detections are dropped.
pub fn collect_outcomes(frames: &[FrameObjects], criterion: &MatchCriterion) -> Outcomes {
    let mut items = Vec::new();
    let mut n_gt = 0;
    for (f, fr) in frames.iter().enumerate() {
        n_gt += fr.n_valid_gt();
        let m = match_frame(&fr.dets, &fr.gts, criterion);
        for mt in &m.matches {
            let d = &fr.dets[mt.det].bbox;
            let g = &fr.gts[mt.gt].bbox;
            items.push(Outcome {
                score: d.score,
                frame: f,
                det: mt.det,
                error: Some(d.center().distance(&g.center())),
            });
        }
        for &i in &m.unmatched_dets {
            items.push(Outcome {
                score: fr.dets[i].bbox.score,
                frame: f,
                det: i,
                error: None,
            });
        }
    }
    items.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.frame.cmp(&b.frame))
            .then(a.det.cmp(&b.det))
    });
    Outcomes { items, n_gt }
}

/// Operating point for all detections scoring at least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
    /// Sum of TP center errors.
    pub error_sum: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// One point per distinct score, thresholds descending.
    pub points: Vec<PrPoint>,
    pub n_gt: usize,
}

pub fn pr_curve(outcomes: &Outcomes) -> PrCurve {
    let n_gt = outcomes.n_gt;
    let mut points: Vec<PrPoint> = Vec::new();
    let (mut tp, mut fp, mut err) = (0usize, 0usize, 0.0f64);
    let items = &outcomes.items;
    for (k, o) in items.iter().enumerate() {
        match o.error {
            Some(e) => {
                tp += 1;
                err += e;
            }
            None => fp += 1,
        }
        let last_of_score = items.get(k + 1).map_or(true, |n| n.score != o.score);
        if last_of_score {
            points.push(PrPoint {
                threshold: o.score,
                tp,
                fp,
                precision: tp as f64 / (tp + fp) as f64,
                recall: if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 },
                error_sum: err,
            });
        }
    }
    PrCurve { points, n_gt }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Points40,
    Points11,
}

impl Interpolation {
    /// Sampled recall levels as (numerator, denominator).
    fn levels(self) -> impl Iterator<Item = (usize, usize)> {
        let (range, den) = match self {
            Interpolation::Points40 => (1..=40, 40),
            Interpolation::Points11 => (0..=10, 10),
        };
        range.map(move |k| (k, den))
    }
}

/// Interpolated AP: mean over recall levels of the best precision at
/// recall at or above the level. `None` without ground truth.
pub fn average_precision(curve: &PrCurve, interp: Interpolation) -> Option<f64> {
    if curve.n_gt == 0 {
        return None;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, den) in interp.levels() {
        // recall tp/n_gt >= k/den, compared in integers
        let best = curve
            .points
            .iter()
            .filter(|p| p.tp * den >= k * curve.n_gt)
            .map(|p| p.precision)
            .fold(0.0, f64::max);
        sum += best;
        n += 1;
    }
    Some(sum / n as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BestF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: Option<f64>,
    /// Mean 3D center error of the true positives.
    pub mean_error: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// No counted detections, so no operating point exists.
    pub empty: bool,
}

pub fn f1_score(tp: usize, fp: usize, n_gt: usize) -> f64 {
    let den = 2 * tp + fp + (n_gt - tp);
    if den == 0 {
        0.0
    } else {
        (2 * tp) as f64 / den as f64
    }
}

/// Highest-F1 operating point; ties go to the higher threshold.
pub fn best_f1(curve: &PrCurve) -> BestF1 {
    let mut best: Option<(&PrPoint, f64)> = None;
    for p in &curve.points {
        let f = f1_score(p.tp, p.fp, curve.n_gt);
        if best.map_or(true, |(_, bf)| f > bf) {
            best = Some((p, f));
        }
    }
    match best {
        None => BestF1 {
            fn_: curve.n_gt,
            empty: true,
            ..BestF1::default()
        },
        Some((p, f1)) => BestF1 {
            precision: p.precision,
            recall: p.recall,
            f1,
            threshold: Some(p.threshold),
            mean_error: (p.tp > 0).then(|| p.error_sum / p.tp as f64),
            tp: p.tp,
            fp: p.fp,
            fn_: curve.n_gt - p.tp,
            empty: false,
        },
    }
}
