//! Refinement losses with analytic gradients.
//!
//! Objectness uses the automated focal loss
//! `-(1 - p_t)^(-ln p_hat) * ln p_t`, where `p_hat` is a moving average of
//! the correct-class probability, so the focusing exponent adapts as
//! training progresses.
//! Center, size and heading use smooth-L1 (transition at 1); the four
//! terms are summed without weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;
pub const DEFAULT_P_HAT_MOMENTUM: f64 = 0.99;

/// Value and derivative with respect to `p_t`. The derivative is zero where
/// the clamp is active.
pub fn automated_focal_loss(p_t: f64, p_hat_t: f64) -> (f64, f64) {
    let p = p_t.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let gamma = -p_hat_t.clamp(PROB_EPS, 1.0).ln();
    let q = 1.0 - p;
    let ln_p = p.ln();
    let weight = q.powf(gamma);
    let value = -weight * ln_p;
    let clamped = p != p_t;
    let grad = if clamped {
        0.0
    } else if gamma == 0.0 {
        -1.0 / p
    } else {
        gamma * q.powf(gamma - 1.0) * ln_p - weight / p
    };
    (value, grad)
}

/// Exponential moving average of the batch-mean correct-class probability,
/// kept in `(0, 1]`.
pub fn update_p_hat(p_hat_t: f64, batch_mean_p_t: f64, momentum: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::invalid("momentum", format!("{momentum} not in [0, 1)")));
    }
    let next = momentum * p_hat_t + (1.0 - momentum) * batch_mean_p_t;
    Ok(next.clamp(PROB_EPS, 1.0))
}

/// `0.5 r^2` for `|r| < 1`, else `|r| - 0.5`. Returns (value, d/dr).
pub fn smooth_l1(residual: f64) -> (f64, f64) {
    let a = residual.abs();
    if a < 1.0 {
        (0.5 * residual * residual, residual)
    } else {
        (a - 0.5, residual.signum())
    }
}

/// Summed smooth-L1 over a residual vector, with per-element gradients.
pub fn smooth_l1_sum<const N: usize>(residuals: &[f64; N]) -> (f64, [f64; N]) {
    let mut grad = [0.0; N];
    let mut total = 0.0;
    for (g, &r) in grad.iter_mut().zip(residuals) {
        let (v, d) = smooth_l1(r);
        total += v;
        *g = d;
    }
    (total, grad)
}

/// Smooth-L1 between the predicted (sin, cos) pair and the encoding of
/// `theta_gt`. Gradients are with respect to `(s_pred, c_pred)`.
pub fn heading_loss(s_pred: f64, c_pred: f64, theta_gt: f64) -> (f64, [f64; 2]) {
    let (s, c) = theta_gt.sin_cos();
    smooth_l1_sum(&[s_pred - s, c_pred - c])
}

/// One training example for the summed objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub p_t: f64,
    pub p_hat_t: f64,
    /// Predicted minus target center offsets.
    pub center_residual: [f64; 3],
    /// Predicted minus target size offsets.
    pub size_residual: [f64; 3],
    pub s_theta: f64,
    pub c_theta: f64,
    pub theta_gt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub xyz: f64,
    pub lwh: f64,
    pub heading: f64,
    pub objectness: f64,
    pub total: f64,
}

pub fn loss_breakdown(sample: &LossSample) -> LossBreakdown {
    let xyz = smooth_l1_sum(&sample.center_residual).0;
    let lwh = smooth_l1_sum(&sample.size_residual).0;
    let heading = heading_loss(sample.s_theta, sample.c_theta, sample.theta_gt).0;
    let objectness = automated_focal_loss(sample.p_t, sample.p_hat_t).0;
    LossBreakdown {
        xyz,
        lwh,
        heading,
        objectness,
        total: xyz + lwh + heading + objectness,
    }
}

pub fn total_loss(sample: &LossSample) -> f64 {
    loss_breakdown(sample).total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::central_difference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    #[test]
    fn focal_examples() {
        assert!(automated_focal_loss(1.0, 0.3).0.abs() < 1e-6);
        let (v, g) = automated_focal_loss(0.5, 1.0);
        assert!((v - LN_2).abs() < 1e-15);
        assert!((g + 2.0).abs() < 1e-12);
        // evaluated independently: -(0.5)^(ln 2) * ln(0.5)
        assert!((automated_focal_loss(0.5, 0.5).0 - 0.428_713_706_134_641_7).abs() < 1e-12);
    }

    #[test]
    fn focal_is_cross_entropy_at_full_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p: f64 = rng.gen_range(0.001..0.999);
            assert!((automated_focal_loss(p, 1.0).0 + p.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_nonnegative_and_decreasing() {
        for &ph in &[0.05, 0.3, 0.7, 1.0] {
            let mut prev = f64::INFINITY;
            for i in 1..1000 {
                let p = i as f64 / 1000.0;
                let v = automated_focal_loss(p, ph).0;
                assert!(v >= 0.0);
                assert!(v <= prev, "p={p} p_hat={ph}");
                prev = v;
            }
        }
    }

    #[test]
    fn focal_clamps_extremes() {
        let (v, g) = automated_focal_loss(0.0, 0.5);
        assert!(v.is_finite() && g == 0.0);
        assert!(automated_focal_loss(1.5, 0.5).0.is_finite());
    }

    #[test]
    fn p_hat_update() {
        assert_eq!(update_p_hat(0.3, 0.8, 0.0).unwrap(), 0.8);
        assert_eq!(update_p_hat(0.4, 0.4, 0.9).unwrap(), 0.4);
        assert!((update_p_hat(0.2, 0.8, 0.9).unwrap() - 0.26).abs() < 1e-15);
        assert!(update_p_hat(0.2, 0.8, 1.0).is_err());
        assert!(update_p_hat(0.2, 0.0, 0.0).unwrap() > 0.0);
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0), (0.0, 0.0));
        assert_eq!(smooth_l1(0.5), (0.125, 0.5));
        assert_eq!(smooth_l1(2.0), (1.5, 1.0));
        assert_eq!(smooth_l1(-2.0), (1.5, -1.0));
    }

    #[test]
    fn heading_examples() {
        assert!(heading_loss(0.0, 1.0, 0.0).0.abs() < 1e-15);
        assert!((heading_loss(1.0, 0.0, 0.0).0 - 1.0).abs() < 1e-15);
        assert!((heading_loss(0.0, 1.0, PI).0 - 1.5).abs() < 1e-12);
        let a = heading_loss(0.3, -0.2, 1.1).0;
        let b = heading_loss(0.3, -0.2, 1.1 + 2.0 * PI).0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
        for _ in 0..1000 {
            let p: f64 = rng.gen_range(0.01..0.99);
            let ph: f64 = rng.gen_range(0.01..1.0);
            let g = automated_focal_loss(p, ph).1;
            let n = central_difference(|x| automated_focal_loss(x, ph).0, p, 1e-5);
            assert!(rel(g, n) < 1e-4, "focal p={p} ph={ph}: {g} vs {n}");

            let r: f64 = rng.gen_range(-3.0..3.0);
            if (r.abs() - 1.0).abs() > 1e-3 {
                let g = smooth_l1(r).1;
                let n = central_difference(|x| smooth_l1(x).0, r, 1e-5);
                assert!(rel(g, n) < 1e-4, "smooth_l1 r={r}");
            }
        }
    }

    #[test]
    fn total_is_sum_and_zero_at_optimum() {
        let perfect = LossSample {
            p_t: 1.0,
            p_hat_t: 0.5,
            center_residual: [0.0; 3],
            size_residual: [0.0; 3],
            s_theta: 0.0,
            c_theta: 1.0,
            theta_gt: 0.0,
        };
        assert!(total_loss(&perfect).abs() < 1e-6);
        let s = LossSample {
            p_t: 0.4,
            p_hat_t: 0.6,
            center_residual: [0.2, -1.5, 0.0],
            size_residual: [0.1, 0.1, 3.0],
            s_theta: 0.5,
            c_theta: 0.5,
            theta_gt: 2.0,
        };
        let b = loss_breakdown(&s);
        let manual = smooth_l1(0.2).0 + smooth_l1(-1.5).0 + smooth_l1(0.1).0 * 2.0 + smooth_l1(3.0).0
            + heading_loss(0.5, 0.5, 2.0).0
            + automated_focal_loss(0.4, 0.6).0;
        assert!((b.total - manual).abs() < 1e-12);
    }
}
