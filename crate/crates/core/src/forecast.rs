//! Sun-anchored prediction zone, occlusion extrapolation and irradiance forecast.
//!
//! The cloud field is treated as frozen and advected rigidly by the global
//! motion `V`. Clouds that will cover the sun `k` frames from now are those
//! `k·‖V‖` pixels upstream, so the zone is a band from the sun pixel along `−V̂`.
//! The sun pixel itself is held fixed over the horizon.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::cloud::CloudProbMap;
use crate::error::{Error, Result};
use crate::imaging::Pixel;
use crate::motion::GlobalMotion;
use crate::solar::{sun_position, ClearSkyModel, Site};

/// Below this speed (pixels per frame) the zone degenerates to a disc at the sun.
pub const STATIC_SPEED_PX: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZoneShape {
    /// Band along the unit `axis` (pointing upstream) of the given length.
    Band { axis: (f64, f64), length: f64 },
    /// Static clouds: a disc of radius `width / 2` centred on the sun.
    Disc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionZone {
    pub origin: Pixel,
    pub width: f64,
    pub shape: ZoneShape,
}

impl PredictionZone {
    /// Distance from the sun that the zone reaches, pixels.
    pub fn length(&self) -> f64 {
        match self.shape {
            ZoneShape::Band { length, .. } => length,
            ZoneShape::Disc => 0.0,
        }
    }
}

pub fn build_prediction_zone(
    sun_px: Option<Pixel>,
    gm: &GlobalMotion,
    horizon_s: f64,
    frame_dt_s: f64,
    width: f64,
) -> Result<PredictionZone> {
    if !(frame_dt_s > 0.0 && frame_dt_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("frame interval must be positive, got {frame_dt_s}")));
    }
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidParameter(format!("zone width must be positive, got {width}")));
    }
    if !(horizon_s >= 0.0 && horizon_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be non-negative, got {horizon_s}")));
    }
    let origin = sun_px.ok_or(Error::NoSun)?;
    let speed = gm.speed();
    let shape = if speed < STATIC_SPEED_PX {
        ZoneShape::Disc
    } else {
        ZoneShape::Band {
            axis: (-gm.vx / speed, -gm.vy / speed),
            length: speed * horizon_s / frame_dt_s,
        }
    };
    Ok(PredictionZone { origin, width, shape })
}

/// Per-step occlusion probability and confidence, steps `1..=n` over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionProfile {
    pub occlusion: Vec<f64>,
    pub confidence: Vec<f64>,
}

impl OcclusionProfile {
    pub fn len(&self) -> usize {
        self.occlusion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occlusion.is_empty()
    }
}

/// Mean probability over sample points, and the fraction of points inside the image.
fn mean_over(prob: &CloudProbMap, points: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let (w, h) = (prob.width() as f64, prob.height() as f64);
    let (mut total, mut inside, mut sum) = (0usize, 0usize, 0.0);
    for (x, y) in points {
        total += 1;
        if x >= -0.5 && y >= -0.5 && x < w - 0.5 && y < h - 0.5 {
            inside += 1;
            sum += prob.raster().sample(x, y, 0) as f64;
        }
    }
    if inside == 0 {
        (0.0, 0.0)
    } else {
        (sum / inside as f64, inside as f64 / total as f64)
    }
}

pub fn occlusion_profile(
    prob: &CloudProbMap,
    zone: &PredictionZone,
    gm: &GlobalMotion,
    steps: usize,
) -> Result<OcclusionProfile> {
    if steps == 0 {
        return Err(Error::InvalidParameter("occlusion profile needs at least one step".into()));
    }
    let o = zone.origin;
    let half_w = zone.width / 2.0;
    let (mean, inside) = match zone.shape {
        ZoneShape::Disc => {
            let r = half_w;
            let n = (2.0 * r).ceil().max(1.0) as usize;
            let pts = (0..n * n).filter_map(move |i| {
                let dx = -r + ((i % n) as f64 + 0.5) * 2.0 * r / n as f64;
                let dy = -r + ((i / n) as f64 + 0.5) * 2.0 * r / n as f64;
                (dx * dx + dy * dy <= r * r).then_some((o.x + dx, o.y + dy))
            });
            let (m, f) = mean_over(prob, pts);
            return Ok(OcclusionProfile {
                occlusion: vec![m; steps],
                confidence: vec![f * gm.confidence; steps],
            });
        }
        ZoneShape::Band { axis, length } => {
            let thickness = (length / steps as f64).max(1.0);
            let perp = (-axis.1, axis.0);
            let n_across = zone.width.ceil().max(1.0) as usize;
            let n_along = thickness.ceil() as usize;
            let mut mean = Vec::with_capacity(steps);
            let mut inside = Vec::with_capacity(steps);
            for k in 1..=steps {
                let centre = k as f64 * length / steps as f64;
                let pts = (0..n_along * n_across).map(|i| {
                    let a = centre - thickness / 2.0 + ((i / n_across) as f64 + 0.5) * thickness / n_along as f64;
                    let b = -half_w + ((i % n_across) as f64 + 0.5) * zone.width / n_across as f64;
                    (o.x + a * axis.0 + b * perp.0, o.y + a * axis.1 + b * perp.1)
                });
                let (m, f) = mean_over(prob, pts);
                mean.push(m);
                inside.push(f);
            }
            (mean, inside)
        }
    };
    Ok(OcclusionProfile {
        occlusion: mean,
        confidence: inside.into_iter().map(|f| f * gm.confidence).collect(),
    })
}

/// Irradiance samples at strictly increasing UTC timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct IrradianceSeries {
    timestamps: Vec<DateTime<Utc>>,
    values: Vec<f64>,
}

impl IrradianceSeries {
    pub fn new(timestamps: Vec<DateTime<Utc>>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} timestamps for {} irradiance values",
                timestamps.len(),
                values.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("irradiance timestamps must strictly increase".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("irradiance value {v} is not a finite non-negative number")));
        }
        Ok(Self { timestamps, values })
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub const DEFAULT_ATTENUATION: f64 = 0.75;

/// `I(k) = clear(k)·(1 − α·occlusion(k))` on the clear-sky timestamps.
pub fn forecast_irradiance(
    profile: &OcclusionProfile,
    clear_sky: &IrradianceSeries,
    alpha: f64,
) -> Result<IrradianceSeries> {
    if profile.len() != clear_sky.len() {
        return Err(Error::Shape(format!(
            "occlusion profile has {} steps, clear-sky series {}",
            profile.len(),
            clear_sky.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("attenuation {alpha} outside [0, 1]")));
    }
    let values = profile
        .occlusion
        .iter()
        .zip(clear_sky.values())
        .map(|(occ, clear)| clear * (1.0 - alpha * occ.clamp(0.0, 1.0)))
        .collect();
    IrradianceSeries::new(clear_sky.timestamps.clone(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastParams {
    /// Forecast horizon, seconds.
    pub horizon_s: f64,
    /// One step per this many seconds of horizon.
    pub step_s: f64,
    /// Zone width as a fraction of the image width.
    pub zone_width_frac: f64,
    /// Attenuation α mapping occlusion to transmissivity loss.
    pub attenuation: f64,
}

impl Default for ForecastParams {
    fn default() -> Self {
        Self {
            horizon_s: 1200.0,
            step_s: 30.0,
            zone_width_frac: 0.15,
            attenuation: DEFAULT_ATTENUATION,
        }
    }
}

impl ForecastParams {
    pub fn steps(&self) -> usize {
        ((self.horizon_s / self.step_s).round() as usize).max(1)
    }
}

/// One forecast step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForecastRow {
    /// Target time of the step.
    pub timestamp: DateTime<Utc>,
    pub horizon_s: f64,
    pub occlusion: f64,
    pub confidence: f64,
    pub irradiance_wm2: f64,
}

/// Full forecast from reference time `t0`: zone, profile and per-step irradiance.
///
/// Clear-sky irradiance at each step uses the sun position at that step's target
/// time; the sun pixel stays at `sun_px`.
#[allow(clippy::too_many_arguments)]
pub fn forecast(
    prob: &CloudProbMap,
    gm: &GlobalMotion,
    sun_px: Option<Pixel>,
    t0: DateTime<Utc>,
    frame_dt_s: f64,
    site: &Site,
    clear_sky: &ClearSkyModel,
    params: &ForecastParams,
) -> Result<Vec<ForecastRow>> {
    let zone = build_prediction_zone(
        sun_px,
        gm,
        params.horizon_s,
        frame_dt_s,
        params.zone_width_frac * prob.width() as f64,
    )?;
    let steps = params.steps();
    let profile = occlusion_profile(prob, &zone, gm, steps)?;
    let horizons: Vec<f64> = (1..=steps).map(|k| k as f64 * params.horizon_s / steps as f64).collect();
    let timestamps: Vec<DateTime<Utc>> = horizons
        .iter()
        .map(|&h| t0 + Duration::milliseconds((h * 1000.0).round() as i64))
        .collect();
    let clear: Vec<f64> = timestamps
        .iter()
        .map(|&t| clear_sky.irradiance_at(sun_position(t, site.lat, site.lon).elevation_deg))
        .collect::<Result<_>>()?;
    let series = forecast_irradiance(&profile, &IrradianceSeries::new(timestamps, clear)?, params.attenuation)?;
    Ok((0..steps)
        .map(|k| ForecastRow {
            timestamp: series.timestamps()[k],
            horizon_s: horizons[k],
            occlusion: profile.occlusion[k],
            confidence: profile.confidence[k],
            irradiance_wm2: series.values()[k],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Raster;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn gm(vx: f64, vy: f64) -> GlobalMotion {
        GlobalMotion { vx, vy, confidence: 1.0 }
    }

    fn series(values: Vec<f64>) -> IrradianceSeries {
        let t0 = Utc.with_ymd_and_hms(2024, 7, 1, 16, 0, 0).unwrap();
        let ts = (0..values.len()).map(|i| t0 + Duration::seconds(30 * i as i64)).collect();
        IrradianceSeries::new(ts, values).unwrap()
    }

    #[test]
    fn band_points_against_the_motion() {
        let z = build_prediction_zone(Some(Pixel::new(50.0, 50.0)), &gm(2.0, 0.0), 600.0, 5.0, 20.0).unwrap();
        match z.shape {
            ZoneShape::Band { axis, length } => {
                assert_eq!(axis, (-1.0, 0.0));
                assert!((length - 240.0).abs() < 1e-12);
            }
            ZoneShape::Disc => panic!("expected a band"),
        }
    }

    #[test]
    fn still_clouds_give_a_disc_and_zero_horizon_a_point() {
        let z = build_prediction_zone(Some(Pixel::new(5.0, 5.0)), &gm(0.0, 0.0), 600.0, 5.0, 8.0).unwrap();
        assert_eq!(z.shape, ZoneShape::Disc);
        let z = build_prediction_zone(Some(Pixel::new(5.0, 5.0)), &gm(1.0, 1.0), 0.0, 5.0, 8.0).unwrap();
        assert_eq!(z.length(), 0.0);
    }

    #[test]
    fn zone_needs_a_sun_and_a_frame_interval() {
        assert!(matches!(
            build_prediction_zone(None, &gm(1.0, 0.0), 60.0, 5.0, 8.0),
            Err(Error::NoSun)
        ));
        assert!(build_prediction_zone(Some(Pixel::new(1.0, 1.0)), &gm(1.0, 0.0), 60.0, 0.0, 8.0).is_err());
    }

    #[test]
    fn clear_sky_profile_is_zero() {
        let prob = CloudProbMap::uniform(64, 64, 0.0);
        let g = gm(1.0, 0.0);
        let z = build_prediction_zone(Some(Pixel::new(50.0, 32.0)), &g, 300.0, 5.0, 10.0).unwrap();
        let p = occlusion_profile(&prob, &z, &g, 10).unwrap();
        assert!(p.occlusion.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn approaching_block_arrives_on_time() {
        // Sun at x = 300; an opaque block starts 120 px upstream (x ≤ 180), moving +x at 2 px/frame.
        let prob = CloudProbMap::new(Raster::from_gray_fn(400, 60, |x, _| if x <= 180 { 1.0 } else { 0.0 })).unwrap();
        let g = gm(2.0, 0.0);
        let z = build_prediction_zone(Some(Pixel::new(300.0, 30.0)), &g, 600.0, 5.0, 20.0).unwrap();
        let p = occlusion_profile(&prob, &z, &g, 20).unwrap();
        // Step k is k·30 s ahead, centred 12·k px upstream; the edge arrives at 300 s (k = 10).
        for (k, occ) in (1..=20).zip(&p.occlusion) {
            if k < 10 {
                assert!(*occ < 0.01, "k={k} occ={occ}");
            } else if k > 10 {
                assert!(*occ > 0.99, "k={k} occ={occ}");
            } else {
                assert!((occ - 0.5).abs() < 0.1, "k={k} occ={occ}");
            }
        }
        assert!(p.confidence.iter().all(|&c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn disc_reads_the_disc_mean() {
        let prob = CloudProbMap::uniform(40, 40, 0.4);
        let g = gm(0.0, 0.0);
        let z = build_prediction_zone(Some(Pixel::new(20.0, 20.0)), &g, 600.0, 5.0, 10.0).unwrap();
        let p = occlusion_profile(&prob, &z, &GlobalMotion { confidence: 0.5, ..g }, 7).unwrap();
        assert_eq!(p.len(), 7);
        assert!(p.occlusion.iter().all(|&o| (o - 0.4).abs() < 1e-6));
        assert!(p.confidence.iter().all(|&c| (c - 0.5).abs() < 1e-12));
    }

    #[test]
    fn slices_leaving_the_image_lose_confidence() {
        let prob = CloudProbMap::uniform(50, 50, 1.0);
        let g = gm(-1.0, 0.0);
        let z = build_prediction_zone(Some(Pixel::new(10.0, 25.0)), &g, 400.0, 5.0, 10.0).unwrap();
        let p = occlusion_profile(&prob, &z, &g, 4).unwrap();
        assert!(p.confidence[0] > 0.99);
        assert_eq!(p.confidence[3], 0.0);
    }

    #[test]
    fn attenuation_examples() {
        let full = OcclusionProfile {
            occlusion: vec![1.0],
            confidence: vec![1.0],
        };
        assert_eq!(forecast_irradiance(&full, &series(vec![800.0]), 0.75).unwrap().values(), &[200.0]);
        assert_eq!(forecast_irradiance(&full, &series(vec![800.0]), 0.0).unwrap().values(), &[800.0]);
        let none = OcclusionProfile {
            occlusion: vec![0.0; 3],
            confidence: vec![1.0; 3],
        };
        let clear = series(vec![100.0, 200.0, 300.0]);
        assert_eq!(forecast_irradiance(&none, &clear, 0.75).unwrap(), clear);
        assert!(matches!(forecast_irradiance(&full, &clear, 0.75), Err(Error::Shape(_))));
    }

    #[test]
    fn series_invariants() {
        let t = Utc.with_ymd_and_hms(2024, 7, 1, 16, 0, 0).unwrap();
        assert!(IrradianceSeries::new(vec![t, t], vec![1.0, 2.0]).is_err());
        assert!(IrradianceSeries::new(vec![t], vec![-1.0]).is_err());
    }

    #[test]
    fn end_to_end_rows_use_target_times() {
        let site = Site::new(39.9, -74.6).unwrap();
        let t0 = Utc.with_ymd_and_hms(2024, 6, 20, 17, 0, 0).unwrap();
        let params = ForecastParams {
            horizon_s: 300.0,
            ..ForecastParams::default()
        };
        let rows = forecast(
            &CloudProbMap::uniform(100, 100, 0.0),
            &gm(1.0, 0.0),
            Some(Pixel::new(50.0, 50.0)),
            t0,
            5.0,
            &site,
            &ClearSkyModel::default(),
            &params,
        )
        .unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[9].timestamp, t0 + Duration::seconds(300));
        assert_eq!(rows[0].horizon_s, 30.0);
        let expected = ClearSkyModel::default()
            .irradiance_at(sun_position(rows[9].timestamp, site.lat, site.lon).elevation_deg)
            .unwrap();
        assert!((rows[9].irradiance_wm2 - expected).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn forecast_is_bounded_and_monotone(
            occ in proptest::collection::vec(0.0f64..1.0, 1..12),
            bump in 0.0f64..1.0,
            alpha in 0.0f64..1.0,
            clear in 0.0f64..1200.0,
        ) {
            let n = occ.len();
            let cs = series(vec![clear; n]);
            let lo = OcclusionProfile { occlusion: occ.clone(), confidence: vec![1.0; n] };
            let hi = OcclusionProfile {
                occlusion: occ.iter().map(|o| (o + bump).min(1.0)).collect(),
                confidence: vec![1.0; n],
            };
            let a = forecast_irradiance(&lo, &cs, alpha).unwrap();
            let b = forecast_irradiance(&hi, &cs, alpha).unwrap();
            for k in 0..n {
                prop_assert!(a.values()[k] >= 0.0 && a.values()[k] <= clear + 1e-9);
                prop_assert!(b.values()[k] <= a.values()[k] + 1e-9);
            }
        }
    }
}
