use serde::{Deserialize, Serialize};

use crate::cloud::CloudProbMap;
use crate::error::{Error, Result};
use crate::imaging::{FlowField, Pixel};

/// Weighting of per-pixel flow in the global cloud motion estimate.
///
/// A pixel's weight is `γ = h(m)·f(‖d‖)·g(v, d)` where `d` points from the pixel
/// to the sun, `h(m) = m^probability_exponent`, `f(r) = exp(−r²/(2σ²))` and
/// `g(v, d) = max(0, cos∠(v, d))` (1 when the flow is zero or `use_direction`
/// is off).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionWeights {
    /// Gaussian distance scale σ in pixels; `None` means half the image width.
    pub distance_scale_px: Option<f64>,
    pub use_direction: bool,
    pub probability_exponent: f64,
}

impl Default for MotionWeights {
    fn default() -> Self {
        Self {
            distance_scale_px: None,
            use_direction: true,
            probability_exponent: 1.0,
        }
    }
}

/// Weighted mean cloud motion in pixels per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalMotion {
    pub vx: f64,
    pub vy: f64,
    /// Total weight relative to the best attainable weight over the valid pixels.
    pub confidence: f64,
}

impl GlobalMotion {
    pub const STILL: GlobalMotion = GlobalMotion {
        vx: 0.0,
        vy: 0.0,
        confidence: 0.0,
    };

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

const MIN_WEIGHT_MASS: f64 = 1e-9;

pub fn global_motion(
    flow: &FlowField,
    prob: &CloudProbMap,
    sun_px: Pixel,
    weights: &MotionWeights,
) -> Result<GlobalMotion> {
    flow.ensure_size(prob.width(), prob.height(), "global_motion")?;
    let sigma = weights
        .distance_scale_px
        .unwrap_or(flow.width() as f64 / 2.0);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "motion distance scale must be positive, got {sigma}"
        )));
    }
    if !(weights.probability_exponent >= 0.0) {
        return Err(Error::InvalidParameter(
            "probability exponent must be non-negative".into(),
        ));
    }
    let two_sigma_sq = 2.0 * sigma * sigma;

    let (mut sum_w, mut sum_vx, mut sum_vy, mut attainable) = (0.0, 0.0, 0.0, 0.0);
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            if !flow.is_valid(x, y) {
                continue;
            }
            let dx = sun_px.x - x as f64;
            let dy = sun_px.y - y as f64;
            let falloff = (-(dx * dx + dy * dy) / two_sigma_sq).exp();
            attainable += falloff;

            let m = prob.at(x, y) as f64;
            let h = if weights.probability_exponent == 1.0 {
                m
            } else {
                m.powf(weights.probability_exponent)
            };
            let (u, v) = flow.displacement(x, y);
            let (u, v) = (u as f64, v as f64);
            let g = if weights.use_direction {
                let (flow_norm, dist) = (u.hypot(v), dx.hypot(dy));
                if flow_norm == 0.0 || dist == 0.0 {
                    1.0
                } else {
                    ((u * dx + v * dy) / (flow_norm * dist)).max(0.0)
                }
            } else {
                1.0
            };
            let gamma = h * falloff * g;
            sum_w += gamma;
            sum_vx += gamma * u;
            sum_vy += gamma * v;
        }
    }
    if sum_w < MIN_WEIGHT_MASS {
        return Ok(GlobalMotion::STILL);
    }
    Ok(GlobalMotion {
        vx: sum_vx / sum_w,
        vy: sum_vy / sum_w,
        confidence: (sum_w / attainable).clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Raster;
    use proptest::prelude::*;

    #[test]
    fn uniform_flow_is_recovered() {
        let flow = FlowField::uniform(20, 16, 1.0, 0.0);
        let gm = global_motion(
            &flow,
            &CloudProbMap::uniform(20, 16, 1.0),
            Pixel::new(30.0, 8.0),
            &MotionWeights::default(),
        )
        .unwrap();
        assert!((gm.vx - 1.0).abs() < 1e-12 && gm.vy.abs() < 1e-12);
        assert!(gm.confidence > 0.0 && gm.confidence <= 1.0);
    }

    #[test]
    fn no_cloud_means_no_motion() {
        let flow = FlowField::uniform(10, 10, 1.0, 2.0);
        let gm = global_motion(
            &flow,
            &CloudProbMap::uniform(10, 10, 0.0),
            Pixel::new(5.0, 5.0),
            &MotionWeights::default(),
        )
        .unwrap();
        assert_eq!(gm, GlobalMotion::STILL);
    }

    #[test]
    fn motion_away_from_sun_direction_is_ignored() {
        // Sun at (5, 5). Pixel A at (2, 5) moves (2, 0) straight at the sun (g = 1);
        // pixel B at (8, 5) moves (0, 2), perpendicular to its sun direction (g = 0).
        let (w, h) = (11, 11);
        let mut u = vec![0.0; w * h];
        let mut v = vec![0.0; w * h];
        let mut valid = vec![false; w * h];
        let a = 5 * w + 2;
        let b = 5 * w + 8;
        u[a] = 2.0;
        v[b] = 2.0;
        valid[a] = true;
        valid[b] = true;
        let flow = FlowField::new(w, h, u, v, valid).unwrap();
        let gm = global_motion(
            &flow,
            &CloudProbMap::uniform(w, h, 1.0),
            Pixel::new(5.0, 5.0),
            &MotionWeights::default(),
        )
        .unwrap();
        assert_eq!((gm.vx, gm.vy), (2.0, 0.0));
        assert!((gm.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_positive_distance_scale_is_rejected() {
        let w = MotionWeights {
            distance_scale_px: Some(0.0),
            ..MotionWeights::default()
        };
        assert!(global_motion(
            &FlowField::zeros(3, 3),
            &CloudProbMap::uniform(3, 3, 1.0),
            Pixel::new(1.0, 1.0),
            &w
        )
        .is_err());
    }

    fn field(w: usize, h: usize, seed: u64) -> (FlowField, CloudProbMap) {
        let f = |i: usize, k: u64| (((i as u64 * 2654435761 + seed * 97 + k) % 1000) as f32) / 1000.0;
        let flow = FlowField::new(
            w,
            h,
            (0..w * h).map(|i| 4.0 * f(i, 1) - 2.0).collect(),
            (0..w * h).map(|i| 4.0 * f(i, 7) - 2.0).collect(),
            (0..w * h).map(|i| f(i, 13) > 0.2).collect(),
        )
        .unwrap();
        let prob = CloudProbMap::new(Raster::from_gray_fn(w, h, |x, y| f(y * w + x, 29))).unwrap();
        (flow, prob)
    }

    proptest! {
        #[test]
        fn invariant_to_probability_rescaling(seed in 0u64..1000, scale in 0.05f32..1.0) {
            let (flow, prob) = field(17, 13, seed);
            let scaled = CloudProbMap::new(Raster::from_gray_fn(17, 13, |x, y| prob.at(x, y) * scale)).unwrap();
            let sun = Pixel::new(6.3, 4.1);
            let a = global_motion(&flow, &prob, sun, &MotionWeights::default()).unwrap();
            let b = global_motion(&flow, &scaled, sun, &MotionWeights::default()).unwrap();
            prop_assert!((a.vx - b.vx).abs() < 1e-5 && (a.vy - b.vy).abs() < 1e-5);
        }

        #[test]
        fn left_right_flip_negates_vx(seed in 0u64..1000) {
            let (w, h) = (17, 13);
            let (flow, prob) = field(w, h, seed);
            let mirrored_flow = FlowField::new(
                w,
                h,
                (0..w * h).map(|i| -flow.u()[(i / w) * w + (w - 1 - i % w)]).collect(),
                (0..w * h).map(|i| flow.v()[(i / w) * w + (w - 1 - i % w)]).collect(),
                (0..w * h).map(|i| flow.validity()[(i / w) * w + (w - 1 - i % w)]).collect(),
            ).unwrap();
            let mirrored_prob = CloudProbMap::new(Raster::from_gray_fn(w, h, |x, y| prob.at(w - 1 - x, y))).unwrap();
            let sun = Pixel::new(6.3, 4.1);
            let sun_m = Pixel::new((w - 1) as f64 - sun.x, sun.y);
            let a = global_motion(&flow, &prob, sun, &MotionWeights::default()).unwrap();
            let b = global_motion(&mirrored_flow, &mirrored_prob, sun_m, &MotionWeights::default()).unwrap();
            prop_assert!((a.vx + b.vx).abs() < 1e-9, "{} vs {}", a.vx, b.vx);
            prop_assert!((a.vy - b.vy).abs() < 1e-9);
            prop_assert!((a.confidence - b.confidence).abs() < 1e-9);
        }
    }
}
