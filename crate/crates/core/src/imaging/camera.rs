//! Omnidirectional (fisheye) sky-camera model.
//!
//! The lens maps zenith angle `θ` to an image-plane radius through a polynomial
//! `r(θ) = Σ c_k θ^k` (ascending degree, pixels). Image-plane coordinates go
//! through a small affine correction before the principal-point offset:
//!
//! ```text
//! u = c·x + d·y + cx
//! v = e·x +   y + cy
//! ```
//!
//! Sky convention: the camera looks at the zenith, image "up" (−y) points to the
//! azimuth `north_offset_deg` and image +x points 90° clockwise from it, so with
//! a zero offset north is up and east is to the right.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pixel position in continuous image coordinates (x to the right, y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub x: f64,
    pub y: f64,
}

impl Pixel {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Pixel) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Direction in the local sky frame (east, north, up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkyDirection {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl SkyDirection {
    pub const ZENITH: SkyDirection = SkyDirection {
        east: 0.0,
        north: 0.0,
        up: 1.0,
    };

    /// Unit direction from azimuth (degrees clockwise from north) and elevation (degrees).
    pub fn from_az_el(azimuth_deg: f64, elevation_deg: f64) -> Self {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        Self {
            east: el.cos() * az.sin(),
            north: el.cos() * az.cos(),
            up: el.sin(),
        }
    }

    pub fn norm(self) -> f64 {
        (self.east * self.east + self.north * self.north + self.up * self.up).sqrt()
    }

    /// Angle from the zenith, radians.
    pub fn zenith_angle(self) -> f64 {
        self.east.hypot(self.north).atan2(self.up)
    }

    /// Azimuth in degrees clockwise from north, in [0, 360).
    pub fn azimuth_deg(self) -> f64 {
        self.east.atan2(self.north).to_degrees().rem_euclid(360.0)
    }
}

/// Result of projecting a sky direction into the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel(Pixel),
    /// The direction lies beyond the maximum zenith angle of the lens.
    BelowField,
}

impl Projection {
    pub fn pixel(self) -> Option<Pixel> {
        match self {
            Projection::Pixel(p) => Some(p),
            Projection::BelowField => None,
        }
    }
}

/// Affine correction terms of the image plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl Default for Affine {
    fn default() -> Self {
        Self {
            c: 1.0,
            d: 0.0,
            e: 0.0,
        }
    }
}

/// Calibrated camera parameters as stored in a camera file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub image_width: usize,
    pub image_height: usize,
    pub cx: f64,
    pub cy: f64,
    /// Radial polynomial coefficients in ascending degree; `poly_coeffs[0]` must be 0.
    pub poly_coeffs: Vec<f64>,
    pub theta_max_rad: f64,
    #[serde(default)]
    pub affine: Affine,
    #[serde(default)]
    pub north_offset_deg: f64,
}

/// Validated fisheye camera.
#[derive(Debug, Clone, PartialEq)]
pub struct FisheyeCamera {
    params: CameraParams,
    r_max: f64,
    det: f64,
}

const MONOTONICITY_SAMPLES: usize = 4096;
const THETA_TOLERANCE: f64 = 1e-9;
const UNIT_TOLERANCE: f64 = 1e-6;

impl FisheyeCamera {
    pub fn new(params: CameraParams) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidCamera(msg));
        if params.image_width == 0 || params.image_height == 0 {
            return bad("image size must be non-zero".into());
        }
        let (w, h) = (params.image_width as f64, params.image_height as f64);
        if !(0.0..=w - 1.0).contains(&params.cx) || !(0.0..=h - 1.0).contains(&params.cy) {
            return bad(format!(
                "principal point ({}, {}) lies outside the {}x{} image",
                params.cx, params.cy, params.image_width, params.image_height
            ));
        }
        if params.poly_coeffs.len() < 2 || params.poly_coeffs.iter().any(|c| !c.is_finite()) {
            return bad("poly_coeffs needs at least a linear term and finite values".into());
        }
        if params.poly_coeffs[0] != 0.0 {
            return bad("poly_coeffs[0] must be 0 so the zenith maps to the principal point".into());
        }
        if !(params.theta_max_rad > 0.0 && params.theta_max_rad <= std::f64::consts::PI) {
            return bad(format!("theta_max_rad {} must lie in (0, π]", params.theta_max_rad));
        }
        let a = params.affine;
        let det = a.c - a.d * a.e;
        if !det.is_finite() || det.abs() < 1e-12 {
            return bad("affine terms are singular".into());
        }
        if !params.north_offset_deg.is_finite() {
            return bad("north_offset_deg must be finite".into());
        }
        // r(θ) must be strictly increasing on [0, θ_max]: check the samples and the
        // derivative at each of them.
        let mut prev = 0.0;
        for i in 1..=MONOTONICITY_SAMPLES {
            let theta = params.theta_max_rad * i as f64 / MONOTONICITY_SAMPLES as f64;
            let r = poly(&params.poly_coeffs, theta);
            if r <= prev || poly_derivative(&params.poly_coeffs, theta) <= 0.0 {
                return bad(format!("r(θ) is not strictly increasing near θ = {theta:.6}"));
            }
            prev = r;
        }
        if poly_derivative(&params.poly_coeffs, 0.0) <= 0.0 {
            return bad("r'(0) must be positive".into());
        }
        let r_max = poly(&params.poly_coeffs, params.theta_max_rad);
        Ok(Self { params, r_max, det })
    }

    /// Equidistant lens `r = f·θ` centred in the image.
    pub fn equidistant(width: usize, height: usize, focal_px: f64, theta_max_rad: f64) -> Result<Self> {
        Self::new(CameraParams {
            image_width: width,
            image_height: height,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            poly_coeffs: vec![0.0, focal_px],
            theta_max_rad,
            affine: Affine::default(),
            north_offset_deg: 0.0,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: CameraParams =
            toml::from_str(text).map_err(|e| Error::InvalidCamera(e.to_string()))?;
        Self::new(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: CameraParams = toml::from_str(&text).map_err(|e| Error::format(path, e))?;
        Self::new(params)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.params).expect("camera parameters serialize")
    }

    pub fn params(&self) -> &CameraParams {
        &self.params
    }

    pub fn width(&self) -> usize {
        self.params.image_width
    }

    pub fn height(&self) -> usize {
        self.params.image_height
    }

    pub fn principal_point(&self) -> Pixel {
        Pixel::new(self.params.cx, self.params.cy)
    }

    /// Image-plane radius for zenith angle `theta`, pixels.
    pub fn radius(&self, theta: f64) -> f64 {
        poly(&self.params.poly_coeffs, theta)
    }

    pub fn max_radius(&self) -> f64 {
        self.r_max
    }

    pub fn theta_max(&self) -> f64 {
        self.params.theta_max_rad
    }

    fn to_ideal(&self, p: Pixel) -> (f64, f64) {
        let a = self.params.affine;
        let du = p.x - self.params.cx;
        let dv = p.y - self.params.cy;
        // [u; v] = [c d; e 1] [x; y]
        let x = (du - a.d * dv) / self.det;
        let y = (a.c * dv - a.e * du) / self.det;
        (x, y)
    }

    fn ideal_to_pixel(&self, x: f64, y: f64) -> Pixel {
        let a = self.params.affine;
        Pixel::new(
            a.c * x + a.d * y + self.params.cx,
            a.e * x + y + self.params.cy,
        )
    }

    fn inside_image(&self, p: Pixel) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (self.params.image_width - 1) as f64
            && p.y <= (self.params.image_height - 1) as f64
    }

    /// True when `p` is inside the image and within the lens field.
    pub fn in_field(&self, p: Pixel) -> bool {
        if !self.inside_image(p) {
            return false;
        }
        let (x, y) = self.to_ideal(p);
        x.hypot(y) <= self.r_max
    }

    /// Back-projects a pixel to a unit sky direction.
    pub fn pixel_to_ray(&self, p: Pixel) -> Result<SkyDirection> {
        if !p.x.is_finite() || !p.y.is_finite() || !self.inside_image(p) {
            return Err(Error::OutOfField { x: p.x, y: p.y });
        }
        let (x, y) = self.to_ideal(p);
        let r = x.hypot(y);
        if r > self.r_max * (1.0 + 1e-12) {
            return Err(Error::OutOfField { x: p.x, y: p.y });
        }
        let theta = self.invert_radius(r.min(self.r_max));
        // Image azimuth is measured clockwise from image-up (−y).
        let psi = if r == 0.0 { 0.0 } else { x.atan2(-y) };
        let phi = psi + self.params.north_offset_deg.to_radians();
        let s = theta.sin();
        Ok(SkyDirection {
            east: s * phi.sin(),
            north: s * phi.cos(),
            up: theta.cos(),
        })
    }

    /// Projects a unit sky direction into the image.
    pub fn ray_to_pixel(&self, d: SkyDirection) -> Result<Projection> {
        let norm = d.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidDirection { norm });
        }
        let theta = d.zenith_angle();
        if theta > self.params.theta_max_rad {
            return Ok(Projection::BelowField);
        }
        let r = self.radius(theta);
        let psi = d.east.atan2(d.north) - self.params.north_offset_deg.to_radians();
        Ok(Projection::Pixel(self.ideal_to_pixel(r * psi.sin(), -r * psi.cos())))
    }

    /// Solves `r(θ) = radius` on [0, θ_max]: bisection to 1e-9 rad, then Newton polish
    /// kept inside the final bracket.
    fn invert_radius(&self, radius: f64) -> f64 {
        if radius <= 0.0 {
            return 0.0;
        }
        let coeffs = &self.params.poly_coeffs;
        let (mut lo, mut hi) = (0.0, self.params.theta_max_rad);
        while hi - lo > THETA_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if poly(coeffs, mid) < radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut theta = 0.5 * (lo + hi);
        for _ in 0..3 {
            let step = (poly(coeffs, theta) - radius) / poly_derivative(coeffs, theta);
            let next = theta - step;
            if !(lo..=hi).contains(&next) {
                break;
            }
            theta = next;
        }
        theta
    }
}

fn poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

fn poly_derivative(coeffs: &[f64], t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &c)| acc * t + k as f64 * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn equidistant_200() -> FisheyeCamera {
        FisheyeCamera::equidistant(801, 801, 200.0, FRAC_PI_2).unwrap()
    }

    #[test]
    fn principal_point_is_zenith() {
        let cam = equidistant_200();
        let d = cam.pixel_to_ray(cam.principal_point()).unwrap();
        assert_eq!((d.east, d.north, d.up), (0.0, 0.0, 1.0));
        assert_eq!(
            cam.ray_to_pixel(SkyDirection::ZENITH).unwrap(),
            Projection::Pixel(cam.principal_point())
        );
    }

    #[test]
    fn equidistant_point_right_of_centre_is_east() {
        // r = f·θ inverts to θ = 100 / 200 = 0.5 rad; +x is east.
        let cam = equidistant_200();
        let c = cam.principal_point();
        let d = cam.pixel_to_ray(Pixel::new(c.x + 100.0, c.y)).unwrap();
        assert!((d.zenith_angle() - 0.5).abs() < 1e-9);
        assert!((d.azimuth_deg() - 90.0).abs() < 1e-9);
        assert!((d.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equidistant_north_projects_above_centre() {
        let cam = equidistant_200();
        let c = cam.principal_point();
        let d = SkyDirection::from_az_el(0.0, 90.0 - 0.25f64.to_degrees());
        let p = cam.ray_to_pixel(d).unwrap().pixel().unwrap();
        assert!((p.x - c.x).abs() < 1e-9);
        assert!((p.y - (c.y - 50.0)).abs() < 1e-9);
    }

    #[test]
    fn beyond_theta_max_is_below_field() {
        let cam = FisheyeCamera::equidistant(401, 401, 200.0, 1.0).unwrap();
        let d = SkyDirection::from_az_el(30.0, 90.0 - 1.2f64.to_degrees());
        assert_eq!(cam.ray_to_pixel(d).unwrap(), Projection::BelowField);
    }

    #[test]
    fn non_unit_direction_is_rejected() {
        let cam = equidistant_200();
        let d = SkyDirection {
            east: 0.0,
            north: 0.0,
            up: 1.01,
        };
        assert!(matches!(cam.ray_to_pixel(d), Err(Error::InvalidDirection { .. })));
    }

    #[test]
    fn out_of_field_pixels_are_rejected() {
        let cam = FisheyeCamera::equidistant(401, 401, 100.0, 1.0).unwrap();
        assert!(matches!(
            cam.pixel_to_ray(Pixel::new(-1.0, 5.0)),
            Err(Error::OutOfField { .. })
        ));
        // Inside the image but beyond r(θ_max) = 100 px.
        assert!(matches!(
            cam.pixel_to_ray(Pixel::new(200.0 + 150.0, 200.0)),
            Err(Error::OutOfField { .. })
        ));
    }

    #[test]
    fn non_monotone_polynomial_is_rejected() {
        let params = CameraParams {
            image_width: 100,
            image_height: 100,
            cx: 50.0,
            cy: 50.0,
            poly_coeffs: vec![0.0, 100.0, 0.0, -60.0],
            theta_max_rad: 1.5,
            affine: Affine::default(),
            north_offset_deg: 0.0,
        };
        assert!(matches!(FisheyeCamera::new(params), Err(Error::InvalidCamera(_))));
    }

    #[test]
    fn north_offset_rotates_azimuth() {
        let mut params = equidistant_200().params().clone();
        params.north_offset_deg = 90.0;
        let cam = FisheyeCamera::new(params).unwrap();
        let c = cam.principal_point();
        // Image-up now faces east.
        let d = cam.pixel_to_ray(Pixel::new(c.x, c.y - 80.0)).unwrap();
        assert!((d.azimuth_deg() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            image_width = 640
            image_height = 480
            cx = 320.5
            cy = 240.25
            poly_coeffs = [0.0, 180.0, 0.0, -4.0]
            theta_max_rad = 1.5
            north_offset_deg = 12.0
            [affine]
            c = 1.001
            d = 0.0005
            e = -0.0003
        "#;
        let cam = FisheyeCamera::from_toml_str(text).unwrap();
        let again = FisheyeCamera::from_toml_str(&cam.to_toml_string()).unwrap();
        assert_eq!(cam, again);
    }
}
