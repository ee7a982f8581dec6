//! Training-time proposal augmentation and regression-target coding.
//!
//! Three modes:
//! * random displacement: the original plus N uniformly shifted copies,
//!   each labeled by its best BEV IoU against the ground truth;
//! * grounding: snap the box bottom to the lowest return in a vertical
//!   pillar around the proposal;
//! * combined: grounding only beyond the immediate range, then displacement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, normalize_angle, planar_range, Box3D, Point3};
use crate::proposal::Proposal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub copies_per_proposal: usize,
    /// Half-width of the uniform per-axis offset, meters.
    pub displacement_range: f64,
    pub positive_iou: f64,
    pub close_negative_min_iou: f64,
    /// Proposals at or beyond this BEV range are grounded in combined mode.
    pub grounding_min_range: f64,
    /// BEV radius of the grounding pillar; `None` uses max(l, w) of the proposal.
    pub pillar_radius: Option<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            copies_per_proposal: 9,
            displacement_range: 0.5,
            positive_iou: 0.5,
            close_negative_min_iou: 0.05,
            grounding_min_range: 10.0,
            pillar_radius: None,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.close_negative_min_iou
            && self.close_negative_min_iou < self.positive_iou
            && self.positive_iou <= 1.0
            && self.displacement_range >= 0.0
            && self.grounding_min_range >= 0.0
            && self.pillar_radius.map_or(true, |r| r > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "augment config",
                "need 0 <= close_negative_min_iou < positive_iou <= 1, non-negative ranges and a positive pillar radius",
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentLabel {
    Positive,
    CloseNegative,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    Random,
    Grounding,
    Combined,
}

impl std::str::FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "grounding" => Ok(Self::Grounding),
            "combined" => Ok(Self::Combined),
            other => Err(Error::Config(format!(
                "unknown augment mode {other:?} (expected random, grounding or combined)"
            ))),
        }
    }
}

/// Refinement-head targets relative to a proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionTarget {
    pub objectness: u8,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub dl: f64,
    pub dw: f64,
    pub dh: f64,
    pub s_theta: f64,
    pub c_theta: f64,
}

impl RegressionTarget {
    /// Target for a proposal with no associated object.
    pub fn background() -> Self {
        Self {
            objectness: 0,
            dx: 0.0,
            dy: 0.0,
            dz: 0.0,
            dl: 0.0,
            dw: 0.0,
            dh: 0.0,
            s_theta: 0.0,
            c_theta: 1.0,
        }
    }
}

/// Offsets are ground truth minus proposal; heading is encoded as (sin, cos)
/// of the ground-truth angle. `objectness` is 1.
pub fn encode_target(proposal: &Box3D, gt: &Box3D) -> RegressionTarget {
    let (s_theta, c_theta) = gt.theta.sin_cos();
    RegressionTarget {
        objectness: 1,
        dx: gt.cx - proposal.cx,
        dy: gt.cy - proposal.cy,
        dz: gt.cz - proposal.cz,
        dl: gt.l - proposal.l,
        dw: gt.w - proposal.w,
        dh: gt.h - proposal.h,
        s_theta,
        c_theta,
    }
}

pub fn decode(proposal: &Box3D, target: &RegressionTarget) -> Box3D {
    Box3D {
        cx: proposal.cx + target.dx,
        cy: proposal.cy + target.dy,
        cz: proposal.cz + target.dz,
        l: proposal.l + target.dl,
        w: proposal.w + target.dw,
        h: proposal.h + target.dh,
        theta: normalize_angle(target.s_theta.atan2(target.c_theta)),
        class_id: proposal.class_id,
        score: proposal.score,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedProposal {
    pub proposal: Proposal,
    pub label: AugmentLabel,
    /// Best BEV IoU against any ground truth.
    pub max_iou: f64,
    /// Index of the best-overlapping ground truth.
    pub gt_index: Option<usize>,
    pub target: RegressionTarget,
    /// 0 for the untouched original.
    pub copy: usize,
}

/// Labels a (possibly displaced) proposal against the ground truth.
pub fn label_proposal(proposal: Proposal, gts: &[Box3D], config: &AugmentConfig, copy: usize) -> AugmentedProposal {
    let mut best: Option<(usize, f64)> = None;
    for (i, gt) in gts.iter().enumerate() {
        let iou = bev_iou(&proposal.bbox, gt);
        if best.map_or(true, |(_, b)| iou > b) {
            best = Some((i, iou));
        }
    }
    let max_iou = best.map_or(0.0, |(_, iou)| iou);
    let label = if max_iou >= config.positive_iou {
        AugmentLabel::Positive
    } else if max_iou >= config.close_negative_min_iou {
        AugmentLabel::CloseNegative
    } else {
        AugmentLabel::Negative
    };
    let mut target = match best {
        Some((i, _)) => encode_target(&proposal.bbox, &gts[i]),
        None => RegressionTarget::background(),
    };
    target.objectness = u8::from(label == AugmentLabel::Positive);
    AugmentedProposal {
        proposal,
        label,
        max_iou,
        gt_index: best.map(|(i, _)| i),
        target,
        copy,
    }
}

fn displace_with(
    proposal: &Proposal,
    gts: &[Box3D],
    config: &AugmentConfig,
    seed: u64,
    vertical: bool,
) -> Vec<AugmentedProposal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = config.displacement_range;
    let offset = |rng: &mut ChaCha8Rng| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
    let mut out = Vec::with_capacity(config.copies_per_proposal + 1);
    out.push(label_proposal(*proposal, gts, config, 0));
    for copy in 1..=config.copies_per_proposal {
        let mut p = *proposal;
        p.bbox.cx += offset(&mut rng);
        let dy = offset(&mut rng);
        if vertical {
            p.bbox.cy += dy;
        }
        p.bbox.cz += offset(&mut rng);
        out.push(label_proposal(p, gts, config, copy));
    }
    out
}

/// The original proposal plus `copies_per_proposal` copies shifted by a
/// uniform offset in `[-displacement_range, displacement_range]` per axis.
pub fn random_displace(
    proposal: &Proposal,
    gts: &[Box3D],
    config: &AugmentConfig,
    seed: u64,
) -> Vec<AugmentedProposal> {
    displace_with(proposal, gts, config, seed, true)
}

fn pillar_radius(proposal: &Proposal, config: &AugmentConfig) -> f64 {
    config
        .pillar_radius
        .unwrap_or_else(|| proposal.bbox.l.max(proposal.bbox.w))
}

/// Places the box bottom on the lowest camera-frame point (largest y) whose
/// BEV distance to the proposal center is within the pillar radius. An empty
/// pillar leaves the proposal unchanged.
pub fn ground(proposal: &Proposal, points: &[Point3], config: &AugmentConfig) -> Proposal {
    let radius = pillar_radius(proposal, config);
    let center = proposal.bbox.center();
    let lowest = points
        .iter()
        .filter(|p| p.bev_distance(&center) <= radius)
        .map(|p| p.y)
        .fold(None, |acc: Option<f64>, y| Some(acc.map_or(y, |a| a.max(y))));
    let mut out = *proposal;
    if let Some(ground_y) = lowest {
        out.bbox.cy = ground_y - out.bbox.h / 2.0;
    }
    out
}

/// Grounding beyond `grounding_min_range` (with vertical displacement
/// suppressed so the grounded height survives), plain displacement inside it.
pub fn combined(
    proposal: &Proposal,
    points: &[Point3],
    gts: &[Box3D],
    config: &AugmentConfig,
    seed: u64,
) -> Vec<AugmentedProposal> {
    if planar_range(&proposal.bbox) >= config.grounding_min_range {
        let grounded = ground(proposal, points, config);
        displace_with(&grounded, gts, config, seed, false)
    } else {
        random_displace(proposal, gts, config, seed)
    }
}

pub fn augment(
    mode: AugmentMode,
    proposal: &Proposal,
    points: &[Point3],
    gts: &[Box3D],
    config: &AugmentConfig,
    seed: u64,
) -> Vec<AugmentedProposal> {
    match mode {
        AugmentMode::Random => random_displace(proposal, gts, config, seed),
        AugmentMode::Grounding => {
            displace_with(&ground(proposal, points, config), gts, config, seed, false)
        }
        AugmentMode::Combined => combined(proposal, points, gts, config, seed),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-proposal seed from the run seed, frame id and proposal index.
pub fn derive_seed(global_seed: u64, frame_id: &str, proposal_index: usize) -> u64 {
    // FNV-1a over the frame id
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in frame_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(global_seed ^ h) ^ proposal_index as u64)
}
