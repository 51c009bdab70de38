//! Colour-ratio cloud probability.
//!
//! A pixel's blue/red ratio `ρ = (B − R) / (B + R + ε)` is high for clear sky and
//! near zero for white or gray cloud. The probability is a logistic softening of
//! a threshold on `ρ`: `p = 1 / (1 + exp(−k·(t − ρ)))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{FisheyeCamera, Pixel, Raster};

const RATIO_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudParams {
    /// Ratio threshold `t`.
    pub threshold: f64,
    /// Logistic steepness `k`.
    pub steepness: f64,
    /// Pixels closer than this to the sun pixel are excluded from motion estimates.
    /// Zero disables the exclusion.
    pub glare_radius_px: f64,
}

impl Default for CloudParams {
    fn default() -> Self {
        Self {
            threshold: 0.10,
            steepness: 40.0,
            glare_radius_px: 0.0,
        }
    }
}

/// Single-channel map of per-pixel cloud probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudProbMap(Raster);

impl CloudProbMap {
    pub fn new(raster: Raster) -> Result<Self> {
        raster.ensure_channels(1)?;
        Ok(Self(raster))
    }

    /// Uniform probability map.
    pub fn uniform(width: usize, height: usize, p: f32) -> Self {
        Self(Raster::filled(width, height, 1, p))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.0.at(x, y)
    }

    /// Zeroes every pixel outside the camera's field of view (not sky).
    pub fn restrict_to_field(&self, camera: &FisheyeCamera) -> CloudProbMap {
        CloudProbMap(Raster::from_gray_fn(self.width(), self.height(), |x, y| {
            if camera.in_field(Pixel::new(x as f64, y as f64)) {
                self.at(x, y)
            } else {
                0.0
            }
        }))
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Cloud probability of one RGB pixel.
pub fn pixel_cloud_probability(r: f64, b: f64, params: &CloudParams) -> f64 {
    let ratio = (b - r) / (b + r + RATIO_EPS);
    logistic(params.steepness * (params.threshold - ratio))
}

pub fn cloud_probability(frame: &Raster, params: &CloudParams) -> Result<CloudProbMap> {
    frame.ensure_channels(3)?;
    Ok(CloudProbMap(Raster::from_gray_fn(
        frame.width(),
        frame.height(),
        |x, y| pixel_cloud_probability(frame.get(x, y, 0) as f64, frame.get(x, y, 2) as f64, params) as f32,
    )))
}

/// Binary mask: 1 where the probability is at least `threshold` (inclusive).
pub fn binarize(prob: &CloudProbMap, threshold: f64) -> Raster {
    Raster::mask_from_fn(prob.width(), prob.height(), |x, y| prob.at(x, y) as f64 >= threshold)
}

/// Validity mask that is false within `radius` pixels of the sun.
pub fn glare_mask(width: usize, height: usize, sun: Option<Pixel>, radius: f64) -> Vec<bool> {
    let mut mask = vec![true; width * height];
    if let (Some(sun), true) = (sun, radius > 0.0) {
        for y in 0..height {
            for x in 0..width {
                if Pixel::new(x as f64, y as f64).distance(sun) <= radius {
                    mask[y * width + x] = false;
                }
            }
        }
    }
    mask
}

impl TryFrom<Raster> for CloudProbMap {
    type Error = Error;

    fn try_from(raster: Raster) -> Result<Self> {
        CloudProbMap::new(raster)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rgb(r: f32, g: f32, b: f32) -> Raster {
        Raster::new(1, 1, 3, vec![r, g, b]).unwrap()
    }

    fn prob_of(r: f32, g: f32, b: f32) -> f64 {
        cloud_probability(&rgb(r, g, b), &CloudParams::default()).unwrap().at(0, 0) as f64
    }

    #[test]
    fn pure_blue_is_clear_sky() {
        // ρ = 1/(1 + 1e-6) → p = logistic(40·(0.1 − ρ)) ≈ logistic(−36)
        let expected = 1.0 / (1.0 + (36.0f64).exp());
        assert!((prob_of(0.0, 0.0, 1.0) - expected).abs() < 1e-9);
        assert!(prob_of(0.0, 0.0, 1.0) < 1e-15);
    }

    #[test]
    fn gray_is_cloud() {
        // ρ = 0 → logistic(4) = 0.98201
        assert!((prob_of(0.8, 0.8, 0.8) - 0.982_013_790_037_908_5).abs() < 1e-6);
    }

    #[test]
    fn equal_red_and_blue_ignores_green() {
        let a = prob_of(0.3, 0.0, 0.3);
        let b = prob_of(0.3, 1.0, 0.3);
        assert_eq!(a, b);
        assert!((a - 1.0 / (1.0 + (-4.0f64).exp())).abs() < 1e-6);
    }

    #[test]
    fn non_rgb_is_a_channel_error() {
        let gray = Raster::filled(2, 2, 1, 0.5);
        assert!(matches!(
            cloud_probability(&gray, &CloudParams::default()),
            Err(Error::Channel { expected: 3, actual: 1 })
        ));
    }

    #[test]
    fn binarize_is_inclusive() {
        let map = CloudProbMap::new(Raster::new(3, 1, 1, vec![0.2, 0.9, 0.5]).unwrap()).unwrap();
        assert_eq!(binarize(&map, 0.5).data(), &[0.0, 1.0, 1.0]);
        let zero = CloudProbMap::uniform(4, 4, 0.0);
        assert_eq!(binarize(&zero, 0.5).count_set(), 0);
    }

    #[test]
    fn glare_mask_excludes_disc() {
        let m = glare_mask(5, 5, Some(Pixel::new(2.0, 2.0)), 1.0);
        assert_eq!(m.iter().filter(|&&ok| !ok).count(), 5);
        assert!(glare_mask(5, 5, Some(Pixel::new(2.0, 2.0)), 0.0).iter().all(|&ok| ok));
        assert!(glare_mask(5, 5, None, 3.0).iter().all(|&ok| ok));
    }

    proptest! {
        #[test]
        fn more_red_never_lowers_probability(r in 0.0f64..1.0, dr in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = CloudParams::default();
            let r2 = (r + dr).min(1.0);
            prop_assert!(pixel_cloud_probability(r2, b, &p) >= pixel_cloud_probability(r, b, &p));
        }

        #[test]
        fn green_does_not_matter(r in 0.0f32..1.0, g1 in 0.0f32..1.0, g2 in 0.0f32..1.0, b in 0.0f32..1.0) {
            prop_assert_eq!(prob_of(r, g1, b), prob_of(r, g2, b));
        }
    }
}
