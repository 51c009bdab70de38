//! Sun position, its projection into the sky camera, and clear-sky irradiance.
//!
//! The ephemeris is the low-precision almanac series (mean longitude, mean
//! anomaly, ecliptic obliquity, sidereal time). It ignores ΔT, nutation and
//! refraction and stays within about 0.01° of the full algorithm between 1950
//! and 2050, far inside the prediction-zone width.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{FisheyeCamera, Pixel, Projection, SkyDirection};

/// Observing site. `north_offset_deg`, when present, overrides the camera file's
/// own value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub north_offset_deg: Option<f64>,
}

impl Site {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let site = Self {
            lat,
            lon,
            north_offset_deg: None,
        };
        site.validate()?;
        Ok(site)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lat.abs() <= 90.0) || !self.lon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "site latitude {} / longitude {} out of range",
                self.lat, self.lon
            )));
        }
        if matches!(self.north_offset_deg, Some(o) if !o.is_finite()) {
            return Err(Error::InvalidParameter("north_offset_deg must be finite".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let site: Site = toml::from_str(text).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        site.validate()?;
        Ok(site)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let site: Site = toml::from_str(&text).map_err(|e| Error::format(path, e))?;
        site.validate()?;
        Ok(site)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("site serializes")
    }

    /// The camera with this site's north offset applied, if the site sets one.
    pub fn orient(&self, camera: &FisheyeCamera) -> Result<FisheyeCamera> {
        match self.north_offset_deg {
            None => Ok(camera.clone()),
            Some(offset) => {
                let mut params = camera.params().clone();
                params.north_offset_deg = offset;
                FisheyeCamera::new(params)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunPosition {
    /// Degrees clockwise from north, in [0, 360).
    pub azimuth_deg: f64,
    /// Degrees above the horizon, in [−90, 90].
    pub elevation_deg: f64,
    pub timestamp: DateTime<Utc>,
}

impl SunPosition {
    pub fn direction(&self) -> SkyDirection {
        SkyDirection::from_az_el(self.azimuth_deg, self.elevation_deg)
    }
}

fn julian_day(t: DateTime<Utc>) -> f64 {
    let seconds = t.timestamp() as f64 + t.timestamp_subsec_nanos() as f64 * 1e-9;
    seconds / 86_400.0 + 2_440_587.5
}

/// Sun position for UTC time `t` at latitude `lat` and east-positive longitude `lon`.
pub fn sun_position(t: DateTime<Utc>, lat: f64, lon: f64) -> SunPosition {
    debug_assert!(lat.abs() <= 90.0, "latitude {lat} out of range");
    let n = julian_day(t) - 2_451_545.0;
    let mean_longitude = (280.460 + 0.985_647_4 * n).rem_euclid(360.0);
    let g = (357.528 + 0.985_600_3 * n).rem_euclid(360.0).to_radians();
    let ecliptic_longitude = (mean_longitude + 1.915 * g.sin() + 0.020 * (2.0 * g).sin()).to_radians();
    let obliquity = (23.439 - 4.0e-7 * n).to_radians();

    let right_ascension = (obliquity.cos() * ecliptic_longitude.sin()).atan2(ecliptic_longitude.cos());
    let declination = (obliquity.sin() * ecliptic_longitude.sin()).asin();

    let gmst_deg = 280.460_618_37 + 360.985_647_366_29 * n;
    let hour_angle = (gmst_deg + lon).to_radians() - right_ascension;

    let phi = lat.to_radians();
    let sin_el = phi.sin() * declination.sin() + phi.cos() * declination.cos() * hour_angle.cos();
    let elevation = sin_el.clamp(-1.0, 1.0).asin();
    let azimuth = (-declination.cos() * hour_angle.sin()).atan2(
        declination.sin() * phi.cos() - declination.cos() * phi.sin() * hour_angle.cos(),
    );
    let mut azimuth_deg = azimuth.to_degrees().rem_euclid(360.0);
    if azimuth_deg >= 360.0 {
        azimuth_deg = 0.0;
    }
    SunPosition {
        azimuth_deg,
        elevation_deg: elevation.to_degrees(),
        timestamp: t,
    }
}

/// Where the sun falls in a sky frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SunPixel {
    Visible(Pixel),
    BelowHorizon,
    /// Above the horizon but outside the lens field or the image.
    OutsideField,
}

impl SunPixel {
    pub fn pixel(self) -> Option<Pixel> {
        match self {
            SunPixel::Visible(p) => Some(p),
            _ => None,
        }
    }

    pub fn require(self) -> Result<Pixel> {
        self.pixel().ok_or(Error::NoSun)
    }
}

pub fn sun_pixel(camera: &FisheyeCamera, sun: &SunPosition) -> SunPixel {
    if sun.elevation_deg <= 0.0 {
        return SunPixel::BelowHorizon;
    }
    match camera.ray_to_pixel(sun.direction()) {
        Ok(Projection::Pixel(p)) if camera.in_field(p) => SunPixel::Visible(p),
        _ => SunPixel::OutsideField,
    }
}

pub const DEFAULT_CLEAR_SKY_SCALE: f64 = 1098.0;
pub const DEFAULT_CLEAR_SKY_EXTINCTION: f64 = 0.057;
pub const DEFAULT_CLEAR_SKY_QUANTILE: f64 = 0.95;
/// Elevation bin width used when fitting a clear-sky table, degrees.
pub const CLEAR_SKY_BIN_DEG: f64 = 2.0;
pub const MIN_CLEAR_SKY_SAMPLES: usize = 50;

/// Clear-sky irradiance as a function of sun elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ClearSkyModel {
    /// `I = A·sin(el)·exp(−b / sin(el))`.
    Analytic { scale: f64, extinction: f64 },
    /// Monotone table interpolated linearly, constant beyond its ends.
    Fitted {
        elevations_deg: Vec<f64>,
        irradiance: Vec<f64>,
    },
}

impl Default for ClearSkyModel {
    fn default() -> Self {
        ClearSkyModel::Analytic {
            scale: DEFAULT_CLEAR_SKY_SCALE,
            extinction: DEFAULT_CLEAR_SKY_EXTINCTION,
        }
    }
}

impl ClearSkyModel {
    pub fn analytic(scale: f64, extinction: f64) -> Result<Self> {
        let model = ClearSkyModel::Analytic { scale, extinction };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClearSkyModel::Analytic { scale, extinction } => {
                if !(*scale > 0.0 && scale.is_finite()) || !(*extinction >= 0.0 && extinction.is_finite()) {
                    return Err(Error::Model(format!(
                        "analytic model needs A > 0 and b ≥ 0, got A = {scale}, b = {extinction}"
                    )));
                }
            }
            ClearSkyModel::Fitted {
                elevations_deg,
                irradiance,
            } => {
                if elevations_deg.len() != irradiance.len() {
                    return Err(Error::Model("fitted table columns differ in length".into()));
                }
                if elevations_deg.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Model("fitted elevations must strictly increase".into()));
                }
                if irradiance.windows(2).any(|w| w[1] < w[0]) || irradiance.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Model(
                        "fitted irradiance must be non-negative and non-decreasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Irradiance in W/m² at the given sun elevation.
    pub fn irradiance_at(&self, elevation_deg: f64) -> Result<f64> {
        if elevation_deg <= 0.0 {
            if let ClearSkyModel::Fitted { elevations_deg, .. } = self {
                if elevations_deg.is_empty() {
                    return Err(Error::Model("fitted table is empty".into()));
                }
            }
            return Ok(0.0);
        }
        match self {
            ClearSkyModel::Analytic { scale, extinction } => {
                let s = elevation_deg.min(90.0).to_radians().sin();
                Ok(scale * s * (-extinction / s).exp())
            }
            ClearSkyModel::Fitted {
                elevations_deg,
                irradiance,
            } => {
                if elevations_deg.is_empty() {
                    return Err(Error::Model("fitted table is empty".into()));
                }
                Ok(interpolate(elevations_deg, irradiance, elevation_deg))
            }
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: ClearSkyModel = toml::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ClearSkyModel = toml::from_str(&text).map_err(|e| Error::format(path, e))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("clear-sky model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

pub fn clear_sky_irradiance(model: &ClearSkyModel, sun: &SunPosition) -> Result<f64> {
    model.irradiance_at(sun.elevation_deg)
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Linear-interpolation quantile of an ascending slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fits a clear-sky table from measured irradiance and matching sun positions.
///
/// Samples are grouped into 2° elevation bins. Each bin contributes one node
/// placed at the `quantile` of its elevations with the `quantile` of its
/// irradiance, so a history that follows a monotone curve exactly reproduces the
/// curve at the nodes. A running maximum over ascending elevation makes the
/// table monotone.
pub fn fit_clear_sky(suns: &[SunPosition], irradiance: &[f64], quantile: f64) -> Result<ClearSkyModel> {
    if suns.len() != irradiance.len() {
        return Err(Error::Shape(format!(
            "{} sun positions for {} irradiance samples",
            suns.len(),
            irradiance.len()
        )));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::InvalidParameter(format!("quantile {quantile} outside [0, 1]")));
    }
    let mut samples: Vec<(usize, f64, f64)> = suns
        .iter()
        .zip(irradiance)
        .filter(|(s, v)| s.elevation_deg > 0.0 && v.is_finite())
        .map(|(s, &v)| {
            let bin = (s.elevation_deg / CLEAR_SKY_BIN_DEG).floor() as usize;
            (bin, s.elevation_deg, v.max(0.0))
        })
        .collect();
    if samples.len() < MIN_CLEAR_SKY_SAMPLES {
        return Err(Error::Model(format!(
            "need at least {MIN_CLEAR_SKY_SAMPLES} daytime samples, got {}",
            samples.len()
        )));
    }
    samples.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut elevations_deg = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for group in samples.chunk_by(|a, b| a.0 == b.0) {
        let els: Vec<f64> = group.iter().map(|s| s.1).collect();
        let mut vals: Vec<f64> = group.iter().map(|s| s.2).collect();
        vals.sort_by(f64::total_cmp);
        let el = quantile_sorted(&els, quantile);
        let v = quantile_sorted(&vals, quantile);
        let v = values.last().map_or(v, |&prev| v.max(prev));
        if elevations_deg.last().is_some_and(|&prev| el <= prev) {
            continue;
        }
        elevations_deg.push(el);
        values.push(v);
    }
    let model = ClearSkyModel::Fitted {
        elevations_deg,
        irradiance: values,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn utc(y: i32, mo: u32, d: u32, h: u32, mi: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, mo, d, h, mi, 0).unwrap()
    }

    fn at_elevation(el: f64) -> SunPosition {
        SunPosition {
            azimuth_deg: 180.0,
            elevation_deg: el,
            timestamp: utc(2024, 6, 1, 12, 0),
        }
    }

    #[test]
    fn equinox_noon_on_the_equator_is_overhead() {
        assert!(sun_position(utc(2000, 3, 20, 12, 7), 0.0, 0.0).elevation_deg > 88.0);
    }

    #[test]
    fn midnight_is_dark() {
        // 05:00 UTC is close to local midnight at 75° W.
        for (mo, d) in [(1, 15), (4, 15), (7, 15), (10, 15)] {
            assert!(sun_position(utc(2021, mo, d, 5, 0), 40.0, -75.0).elevation_deg < 0.0);
        }
    }

    #[test]
    fn solstice_noon_elevation_at_40_north() {
        // Solar noon at lon 0 on 2021-06-21 is near 12:02 UTC.
        let best = (0..240)
            .map(|m| sun_position(utc(2021, 6, 21, 10, 0) + chrono::Duration::minutes(m), 40.0, 0.0))
            .max_by(|a, b| a.elevation_deg.total_cmp(&b.elevation_deg))
            .unwrap();
        assert!((best.elevation_deg - 73.44).abs() < 0.5, "{}", best.elevation_deg);
        assert!((best.azimuth_deg - 180.0).abs() < 2.0, "{}", best.azimuth_deg);
    }

    #[test]
    fn morning_sun_is_east_and_afternoon_west() {
        let am = sun_position(utc(2021, 9, 1, 14, 0), 40.0, -74.0);
        let pm = sun_position(utc(2021, 9, 1, 21, 0), 40.0, -74.0);
        assert!(am.azimuth_deg > 45.0 && am.azimuth_deg < 180.0);
        assert!(pm.azimuth_deg > 180.0 && pm.azimuth_deg < 315.0);
    }

    #[test]
    fn zenith_sun_projects_to_principal_point() {
        let cam = FisheyeCamera::equidistant(401, 401, 200.0, 1.5).unwrap();
        let p = sun_pixel(&cam, &at_elevation(90.0)).pixel().unwrap();
        assert!(p.distance(cam.principal_point()) < 1e-6);
    }

    #[test]
    fn sun_below_horizon_has_no_pixel() {
        let cam = FisheyeCamera::equidistant(401, 401, 200.0, 1.5).unwrap();
        assert_eq!(sun_pixel(&cam, &at_elevation(-5.0)), SunPixel::BelowHorizon);
        assert!(matches!(SunPixel::BelowHorizon.require(), Err(Error::NoSun)));
    }

    #[test]
    fn eastern_sun_at_60_degrees() {
        let cam = FisheyeCamera::equidistant(401, 401, 200.0, 1.5).unwrap();
        let sun = SunPosition {
            azimuth_deg: 90.0,
            elevation_deg: 60.0,
            timestamp: utc(2024, 6, 1, 12, 0),
        };
        let p = sun_pixel(&cam, &sun).pixel().unwrap();
        assert!((p.x - 200.0 - 104.7198).abs() < 1e-3 && (p.y - 200.0).abs() < 1e-9);
    }

    #[test]
    fn low_sun_outside_a_narrow_lens() {
        let cam = FisheyeCamera::equidistant(101, 101, 50.0, 0.5).unwrap();
        assert_eq!(sun_pixel(&cam, &at_elevation(20.0)), SunPixel::OutsideField);
    }

    #[test]
    fn analytic_reference_values() {
        let m = ClearSkyModel::default();
        assert_eq!(m.irradiance_at(0.0).unwrap(), 0.0);
        assert_eq!(m.irradiance_at(-10.0).unwrap(), 0.0);
        assert!((m.irradiance_at(90.0).unwrap() - 1098.0 * (-0.057f64).exp()).abs() < 1e-9);
        assert!((m.irradiance_at(90.0).unwrap() - 1037.2).abs() < 0.05);
        assert!((m.irradiance_at(30.0).unwrap() - 549.0 * (-0.114f64).exp()).abs() < 1e-9);
        assert!((m.irradiance_at(30.0).unwrap() - 489.9).abs() < 0.1);
    }

    #[test]
    fn empty_fitted_table_is_a_model_error() {
        let m = ClearSkyModel::Fitted {
            elevations_deg: vec![],
            irradiance: vec![],
        };
        assert!(matches!(m.irradiance_at(30.0), Err(Error::Model(_))));
    }

    fn history(els: impl Iterator<Item = f64>, model: &ClearSkyModel) -> (Vec<SunPosition>, Vec<f64>) {
        let suns: Vec<SunPosition> = els.map(at_elevation).collect();
        let vals = suns.iter().map(|s| clear_sky_irradiance(model, s).unwrap()).collect();
        (suns, vals)
    }

    #[test]
    fn fit_reproduces_an_exact_history() {
        let truth = ClearSkyModel::default();
        let (suns, vals) = history((0..2000).map(|i| 10.0 + 70.0 * i as f64 / 1999.0), &truth);
        let fit = fit_clear_sky(&suns, &vals, 0.95).unwrap();
        // The lowest bin's node sits near its top edge, so its centre is extrapolated.
        for centre in (13..80).step_by(2) {
            let el = centre as f64;
            let (a, b) = (fit.irradiance_at(el).unwrap(), truth.irradiance_at(el).unwrap());
            assert!((a - b).abs() / b < 0.02, "el {el}: {a} vs {b}");
        }
    }

    #[test]
    fn single_bin_history_extrapolates_constantly() {
        let truth = ClearSkyModel::default();
        let (suns, vals) = history((0..60).map(|i| 30.0 + i as f64 / 60.0), &truth);
        let fit = fit_clear_sky(&suns, &vals, 0.95).unwrap();
        match &fit {
            ClearSkyModel::Fitted { elevations_deg, .. } => assert_eq!(elevations_deg.len(), 1),
            _ => unreachable!(),
        }
        assert_eq!(fit.irradiance_at(5.0).unwrap(), fit.irradiance_at(85.0).unwrap());
    }

    #[test]
    fn too_little_history_is_rejected() {
        let (suns, vals) = history((0..49).map(|i| 20.0 + i as f64), &ClearSkyModel::default());
        assert!(matches!(fit_clear_sky(&suns, &vals, 0.95), Err(Error::Model(_))));
        let (night, zeros) = history((0..100).map(|i| -(i as f64)), &ClearSkyModel::default());
        assert!(matches!(fit_clear_sky(&night, &zeros, 0.95), Err(Error::Model(_))));
    }

    #[test]
    fn model_file_round_trip() {
        let truth = ClearSkyModel::default();
        let (suns, vals) = history((0..300).map(|i| 5.0 + i as f64 * 0.25), &truth);
        let fit = fit_clear_sky(&suns, &vals, 0.9).unwrap();
        assert_eq!(ClearSkyModel::from_toml_str(&fit.to_toml_string()).unwrap(), fit);
        assert_eq!(ClearSkyModel::from_toml_str(&truth.to_toml_string()).unwrap(), truth);
    }

    #[test]
    fn site_file_overrides_north_offset() {
        let site = Site::from_toml_str("lat = 39.8\nlon = -74.5\nnorth_offset_deg = 90.0\n").unwrap();
        let cam = site.orient(&FisheyeCamera::equidistant(101, 101, 30.0, 1.5).unwrap()).unwrap();
        assert_eq!(cam.params().north_offset_deg, 90.0);
        assert!(Site::from_toml_str("lat = 91.0\nlon = 0.0\n").is_err());
    }

    proptest! {
        #[test]
        fn analytic_is_strictly_increasing(a in 0.01f64..89.9, step in 0.01f64..10.0) {
            let m = ClearSkyModel::default();
            let b = (a + step).min(90.0);
            prop_assume!(b > a);
            prop_assert!(m.irradiance_at(b).unwrap() > m.irradiance_at(a).unwrap());
        }

        #[test]
        fn ephemeris_output_ranges(secs in 631_152_000i64..2_524_608_000, lat in -90.0f64..90.0, lon in -180.0f64..180.0) {
            let s = sun_position(DateTime::from_timestamp(secs, 0).unwrap(), lat, lon);
            prop_assert!((0.0..360.0).contains(&s.azimuth_deg));
            prop_assert!((-90.0..=90.0).contains(&s.elevation_deg));
        }

        #[test]
        fn highest_sun_is_due_south_at_northern_sites(day in 0i64..3650, lat in 30.0f64..65.0, lon in -180.0f64..180.0) {
            // Scan the minutes around local noon for the highest elevation.
            let noon = utc(2000, 1, 1, 12, 0) + chrono::Duration::days(day)
                - chrono::Duration::minutes((lon * 4.0).round() as i64);
            let best = (-40..=40)
                .map(|m| sun_position(noon + chrono::Duration::minutes(m), lat, lon))
                .max_by(|a, b| a.elevation_deg.total_cmp(&b.elevation_deg))
                .unwrap();
            prop_assert!((best.azimuth_deg - 180.0).abs() < 2.0, "{best:?}");
        }

        #[test]
        fn fitted_table_is_monotone(seed in 0u64..500) {
            let truth = ClearSkyModel::default();
            let els: Vec<f64> = (0..400).map(|i| 1.0 + ((i as u64 * 7919 + seed * 31) % 8800) as f64 / 100.0).collect();
            let (suns, mut vals) = history(els.into_iter(), &truth);
            for (i, v) in vals.iter_mut().enumerate() {
                if (i as u64 + seed) % 3 == 0 {
                    *v *= 0.3;
                }
            }
            let fit = fit_clear_sky(&suns, &vals, 0.95).unwrap();
            match fit {
                ClearSkyModel::Fitted { elevations_deg, irradiance } => {
                    prop_assert!(elevations_deg.windows(2).all(|w| w[1] > w[0]));
                    prop_assert!(irradiance.windows(2).all(|w| w[1] >= w[0]));
                }
                _ => unreachable!(),
            }
        }
    }
}
