//! Slow reference implementations used to cross-check the fast paths:
//! numeric differentiation, sampled BEV overlap, and brute-force
//! threshold enumeration for detection metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{EvalObject, FrameObjects, MatchCriterion};
use crate::geometry::Box3D;

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

fn inside_footprint(b: &Box3D, x: f64, z: f64) -> bool {
    let (s, c) = b.theta.sin_cos();
    let (dx, dz) = (x - b.cx, z - b.cz);
    // inverse of the yaw rotation
    (c * dx - s * dz).abs() <= b.l / 2.0 && (s * dx + c * dz).abs() <= b.w / 2.0
}

fn footprint_extent(b: &Box3D) -> (f64, f64, f64, f64) {
    let (s, c) = b.theta.sin_cos();
    let ex = (c * b.l).abs() / 2.0 + (s * b.w).abs() / 2.0;
    let ez = (s * b.l).abs() / 2.0 + (c * b.w).abs() / 2.0;
    (b.cx - ex, b.cx + ex, b.cz - ez, b.cz + ez)
}

/// BEV IoU from a jittered `n × n` grid over the joint bounding rectangle
/// (one uniform sample per cell).
pub fn monte_carlo_bev_iou(a: &Box3D, b: &Box3D, n: usize, seed: u64) -> f64 {
    let (ax0, ax1, az0, az1) = footprint_extent(a);
    let (bx0, bx1, bz0, bz1) = footprint_extent(b);
    let (x0, x1) = (ax0.min(bx0), ax1.max(bx1));
    let (z0, z1) = (az0.min(bz0), az1.max(bz1));
    let (dx, dz) = ((x1 - x0) / n as f64, (z1 - z0) / n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut inter, mut union) = (0u64, 0u64);
    for i in 0..n {
        for j in 0..n {
            let x = x0 + (i as f64 + rng.gen::<f64>()) * dx;
            let z = z0 + (j as f64 + rng.gen::<f64>()) * dz;
            let (ia, ib) = (inside_footprint(a, x, z), inside_footprint(b, x, z));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Per-detection key for lexicographic comparison: valid match beats an
/// ignored match beats no match, then similarity.
type Key = (u8, f64);

fn key_greater(a: &[Key], b: &[Key]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x.0 != y.0 {
            return x.0 > y.0;
        }
        if x.1 != y.1 {
            return x.1 > y.1;
        }
    }
    false
}

/// Exhaustive one-to-one assignment. Detections are visited by descending
/// score; the lexicographically best key vector wins. Returns for each
/// visited detection the matched ground truth, if any.
pub fn brute_force_assignment(
    dets: &[EvalObject],
    gts: &[EvalObject],
    criterion: &MatchCriterion,
) -> Vec<(usize, Option<usize>)> {
    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| !dets[i].ignored).collect();
    order.sort_by(|&a, &b| {
        dets[b].bbox.score.partial_cmp(&dets[a].bbox.score).unwrap().then(a.cmp(&b))
    });

    struct Search<'a> {
        order: &'a [usize],
        dets: &'a [EvalObject],
        gts: &'a [EvalObject],
        criterion: &'a MatchCriterion,
        keys: Vec<Key>,
        picks: Vec<Option<usize>>,
        used: Vec<bool>,
        best: Option<(Vec<Key>, Vec<Option<usize>>)>,
    }

    fn go(s: &mut Search, depth: usize) {
        if depth == s.order.len() {
            if s.best.as_ref().map_or(true, |(bk, _)| key_greater(&s.keys, bk)) {
                s.best = Some((s.keys.clone(), s.picks.clone()));
            }
            return;
        }
        let det = s.dets[s.order[depth]].bbox;
        for j in 0..s.gts.len() {
            if s.used[j] {
                continue;
            }
            if let Some(sim) = s.criterion.similarity(&det, &s.gts[j].bbox) {
                let cat = if s.gts[j].ignored { 1 } else { 2 };
                s.used[j] = true;
                s.keys.push((cat, sim));
                s.picks.push(Some(j));
                go(s, depth + 1);
                s.picks.pop();
                s.keys.pop();
                s.used[j] = false;
            }
        }
        s.keys.push((0, 0.0));
        s.picks.push(None);
        go(s, depth + 1);
        s.picks.pop();
        s.keys.pop();
    }

    let mut s = Search {
        order: &order,
        dets,
        gts,
        criterion,
        keys: Vec::new(),
        picks: Vec::new(),
        used: vec![false; gts.len()],
        best: None,
    };
    go(&mut s, 0);
    let picks = s.best.map(|b| b.1).unwrap_or_default();
    order.iter().copied().zip(picks).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
    pub error_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub mean_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub n_gt: usize,
    pub points: Vec<OraclePoint>,
    pub ap40: Option<f64>,
    pub ap11: Option<f64>,
    pub best_f1: Option<OracleF1>,
}

/// Re-matches from scratch at every distinct detection score and counts
/// operating points directly.
pub fn threshold_enumeration(frames: &[FrameObjects], criterion: &MatchCriterion) -> OracleMetrics {
    let n_gt: usize = frames
        .iter()
        .map(|f| f.gts.iter().filter(|g| !g.ignored).count())
        .sum();
    let mut scores: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.dets.iter().filter(|d| !d.ignored).map(|d| d.bbox.score))
        .collect();
    scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
    scores.dedup();

    let mut points: Vec<OraclePoint> = Vec::new();
    for &t in &scores {
        let (mut tp, mut fp, mut err) = (0, 0, 0.0);
        for f in frames {
            let kept: Vec<EvalObject> = f
                .dets
                .iter()
                .map(|d| EvalObject {
                    bbox: d.bbox,
                    ignored: d.ignored || d.bbox.score < t,
                })
                .collect();
            for (i, pick) in brute_force_assignment(&kept, &f.gts, criterion) {
                match pick {
                    Some(j) if !f.gts[j].ignored => {
                        tp += 1;
                        err += kept[i].bbox.center().distance(&f.gts[j].bbox.center());
                    }
                    Some(_) => {}
                    None => fp += 1,
                }
            }
        }
        if tp + fp == 0 || points.last().is_some_and(|p| (p.tp, p.fp) == (tp, fp)) {
            continue;
        }
        points.push(OraclePoint {
            threshold: t,
            tp,
            fp,
            precision: tp as f64 / (tp + fp) as f64,
            recall: if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 },
            error_sum: err,
        });
    }

    let ap = |levels: &[usize], den: usize| -> Option<f64> {
        if n_gt == 0 {
            return None;
        }
        let mut sum = 0.0;
        for &k in levels {
            let mut best = 0.0f64;
            for p in &points {
                if p.tp * den >= k * n_gt && p.precision > best {
                    best = p.precision;
                }
            }
            sum += best;
        }
        Some(sum / levels.len() as f64)
    };
    let l40: Vec<usize> = (1..=40).collect();
    let l11: Vec<usize> = (0..=10).collect();

    let mut best: Option<(f64, &OraclePoint)> = None;
    for p in &points {
        let f1 = (2 * p.tp) as f64 / (2 * p.tp + p.fp + (n_gt - p.tp)) as f64;
        if best.map_or(true, |(b, _)| f1 > b) {
            best = Some((f1, p));
        }
    }
    OracleMetrics {
        n_gt,
        ap40: ap(&l40, 40),
        ap11: ap(&l11, 10),
        best_f1: best.map(|(f1, p)| OracleF1 {
            precision: p.precision,
            recall: p.recall,
            f1,
            threshold: p.threshold,
            tp: p.tp,
            fp: p.fp,
            mean_error: (p.tp > 0).then(|| p.error_sum / p.tp as f64),
        }),
        points,
    }
}
