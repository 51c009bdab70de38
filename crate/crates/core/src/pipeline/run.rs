//! End-to-end run: sky frames, weather and field tiles to a risk report.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};

use super::config::{FlowConfig, NowcastConfig, PipelineConfig};
use super::ingest::{format_timestamp, read_frames, read_tiles, read_weather};
use super::report::{assemble_report, cell_densities, RiskReport};
use crate::berry::{count, density_map, load_mask, CountDensityMap, Extent, TileCount, WatershedParams};
use crate::cloud::{cloud_probability, glare_mask, CloudParams, CloudProbMap};
use crate::error::{Error, Result};
use crate::forecast::{forecast, ForecastParams, ForecastRow};
use crate::imaging::io::load_raster;
use crate::imaging::{FisheyeCamera, FlowField, Pixel, Raster};
use crate::motion::{consistency_check, global_motion, lucas_kanade_flow, mask_flow, GlobalMotion, MotionWeights};
use crate::solar::{sun_pixel, sun_position, ClearSkyModel, Site, SunPixel};
use crate::temp::{TempModel, WeatherRecord};

/// Cloud probability of a frame, zeroed outside the camera field.
pub fn segment(frame: &Raster, camera: &FisheyeCamera, params: &CloudParams) -> Result<CloudProbMap> {
    Ok(cloud_probability(frame, params)?.restrict_to_field(camera))
}

/// Forward/backward-checked flow from `prev` to `next`, with glare pixels removed.
pub fn validated_flow(
    prev: &Raster,
    next: &Raster,
    sun: Option<Pixel>,
    cloud: &CloudParams,
    flow: &FlowConfig,
) -> Result<FlowField> {
    let (g0, g1) = (prev.to_gray(), next.to_gray());
    let (fwd, bwd) = rayon::join(
        || lucas_kanade_flow(&g0, &g1, &flow.lk),
        || lucas_kanade_flow(&g1, &g0, &flow.lk),
    );
    let checked = consistency_check(&fwd?, &bwd?, flow.consistency_tol_px)?;
    let glare = glare_mask(checked.width(), checked.height(), sun, cloud.glare_radius_px);
    let valid = checked.validity().iter().zip(&glare).map(|(&a, &b)| a && b).collect();
    FlowField::new(checked.width(), checked.height(), checked.u().to_vec(), checked.v().to_vec(), valid)
}

/// Global cloud motion between two frames, in pixels per frame.
pub struct SkyMotion {
    pub prev_prob: CloudProbMap,
    pub next_prob: CloudProbMap,
    pub flow: FlowField,
    pub motion: GlobalMotion,
}

pub fn estimate_motion(
    prev: &Raster,
    next: &Raster,
    camera: &FisheyeCamera,
    sun: Pixel,
    cloud: &CloudParams,
    flow: &FlowConfig,
    weights: &MotionWeights,
) -> Result<SkyMotion> {
    let prev_prob = segment(prev, camera, cloud)?;
    let next_prob = segment(next, camera, cloud)?;
    let raw = validated_flow(prev, next, Some(sun), cloud, flow)?;
    let field = if flow.mask_flow { mask_flow(&raw, &prev_prob)? } else { raw };
    let motion = global_motion(&field, &prev_prob, sun, weights)?;
    Ok(SkyMotion {
        prev_prob,
        next_prob,
        flow: field,
        motion,
    })
}

/// Irradiance forecast from the last two frames of a sequence.
#[allow(clippy::too_many_arguments)]
pub fn forecast_from_frames(
    prev: &Raster,
    next: &Raster,
    t_prev: DateTime<Utc>,
    t_ref: DateTime<Utc>,
    camera: &FisheyeCamera,
    site: &Site,
    clear_sky: &ClearSkyModel,
    cfg: &NowcastConfig,
) -> Result<(Vec<ForecastRow>, Vec<String>)> {
    let dt = (t_ref - t_prev).num_milliseconds() as f64 / 1000.0;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("frames must be in strictly increasing time order".into()));
    }
    let sun = sun_position(t_ref, site.lat, site.lon);
    match sun_pixel(camera, &sun) {
        SunPixel::Visible(px) => {
            let m = estimate_motion(prev, next, camera, px, &cfg.cloud, &cfg.flow, &cfg.motion)?;
            let rows = forecast(&m.next_prob, &m.motion, Some(px), t_ref, dt, site, clear_sky, &cfg.forecast)?;
            Ok((rows, Vec::new()))
        }
        other => {
            let why = if other == SunPixel::BelowHorizon { "below the horizon" } else { "outside the camera field" };
            let rows = unobserved_forecast(t_ref, site, clear_sky, &cfg.forecast)?;
            Ok((rows, vec![format!("sun is {why} at the reference time; forecast is clear-sky only")]))
        }
    }
}

/// Clear-sky rows with zero confidence, used when the sun cannot be seen.
fn unobserved_forecast(t0: DateTime<Utc>, site: &Site, clear_sky: &ClearSkyModel, p: &ForecastParams) -> Result<Vec<ForecastRow>> {
    let steps = p.steps();
    (1..=steps)
        .map(|k| {
            let horizon_s = k as f64 * p.horizon_s / steps as f64;
            let timestamp = t0 + Duration::milliseconds((horizon_s * 1000.0).round() as i64);
            Ok(ForecastRow {
                timestamp,
                horizon_s,
                occlusion: 0.0,
                confidence: 0.0,
                irradiance_wm2: clear_sky.irradiance_at(sun_position(timestamp, site.lat, site.lon).elevation_deg)?,
            })
        })
        .collect()
}

pub const FORECAST_HEADER: &str = "timestamp_utc,horizon_s,occlusion,confidence,irradiance_wm2";

pub fn forecast_to_csv(rows: &[ForecastRow]) -> String {
    let mut s = format!("{FORECAST_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.0},{:.6},{:.6},{:.3}",
            format_timestamp(r.timestamp),
            r.horizon_s,
            r.occlusion,
            r.confidence,
            r.irradiance_wm2
        );
    }
    s
}

/// The latest weather record at or before `t`.
pub fn latest_weather(records: &[WeatherRecord], t: DateTime<Utc>) -> Option<&WeatherRecord> {
    records.iter().rev().find(|r| r.timestamp <= t)
}

/// Counts berries in every tile of a manifest.
pub fn count_tiles(manifest: &Path, params: &WatershedParams) -> Result<Vec<TileCount>> {
    let tiles = read_tiles(manifest)?;
    let counts: Vec<Result<usize>> = {
        use rayon::prelude::*;
        tiles.par_iter().map(|t| Ok(count(&load_mask(&t.path)?, params))).collect()
    };
    tiles
        .iter()
        .zip(counts)
        .map(|(t, c)| {
            Ok(TileCount {
                easting: t.easting,
                northing: t.northing,
                count: c? as f64,
            })
        })
        .collect()
}

/// Bounding box of the tile positions padded by half a cell on each side.
pub fn tile_extent(tiles: &[TileCount], cell_size_m: f64) -> Option<Extent> {
    let first = tiles.first()?;
    let mut e = Extent {
        min_easting: first.easting,
        min_northing: first.northing,
        max_easting: first.easting,
        max_northing: first.northing,
    };
    for t in tiles {
        e.min_easting = e.min_easting.min(t.easting);
        e.min_northing = e.min_northing.min(t.northing);
        e.max_easting = e.max_easting.max(t.easting);
        e.max_northing = e.max_northing.max(t.northing);
    }
    let pad = cell_size_m / 2.0;
    Some(Extent {
        min_easting: e.min_easting - pad,
        min_northing: e.min_northing - pad,
        max_easting: e.max_easting + pad,
        max_northing: e.max_northing + pad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub forecast: Vec<ForecastRow>,
    pub density: Option<CountDensityMap>,
    pub report: RiskReport,
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input not found"),
        ))
    }
}

/// Runs every stage on the most recent frame pair.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let inputs = &cfg.inputs;
    for p in [&inputs.sky_dir, &inputs.camera, &inputs.site, &inputs.weather, &inputs.temp_model] {
        require(p)?;
    }
    let site = Site::load(&inputs.site)?;
    let camera = site.orient(&FisheyeCamera::load(&inputs.camera)?)?;
    let clear_sky = cfg.clear_sky_model()?;
    let model = TempModel::load(&inputs.temp_model)?;

    let frames = read_frames(&inputs.sky_dir)?;
    let mut warnings = frames.warnings;
    let [.., prev, last] = frames.records.as_slice() else {
        return Err(Error::Data(format!(
            "{} lists fewer than two frames",
            inputs.sky_dir.join(super::ingest::FRAMES_MANIFEST).display()
        )));
    };
    let t_ref = last.timestamp;
    let (prev_img, next_img) = (load_raster(&prev.path)?, load_raster(&last.path)?);
    let (rows, notes) = forecast_from_frames(&prev_img, &next_img, prev.timestamp, t_ref, &camera, &site, &clear_sky, &cfg.nowcast)?;
    warnings.extend(notes);

    let weather = read_weather(&inputs.weather)?;
    warnings.extend(weather.warnings);
    let latest = latest_weather(&weather.records, t_ref).ok_or_else(|| {
        Error::Data(format!(
            "{}: no weather at or before {}",
            inputs.weather.display(),
            format_timestamp(t_ref)
        ))
    })?;
    let age_min = (t_ref - latest.timestamp).num_seconds() as f64 / 60.0;
    if age_min > cfg.risk.stale_after_min {
        warnings.push(format!(
            "latest weather ({}) is {:.0} min older than the reference frame",
            format_timestamp(latest.timestamp),
            age_min
        ));
    }
    let horizons = rows
        .iter()
        .map(|r| {
            let temp = model.predict_record(&latest.with_irradiance(r.irradiance_wm2))?;
            Ok((r.timestamp, r.horizon_s, r.irradiance_wm2, temp))
        })
        .collect::<Result<Vec<_>>>()?;

    let density = match &inputs.tiles {
        Some(manifest) => {
            let tiles = count_tiles(manifest, &cfg.berry.watershed)?;
            let extent = match cfg.berry.extent.or_else(|| tile_extent(&tiles, cfg.berry.cell_size_m)) {
                Some(e) => e,
                None => return Err(Error::Data(format!("{} lists no tiles", manifest.display()))),
            };
            Some(density_map(&tiles, cfg.berry.cell_size_m, extent)?)
        }
        None => None,
    };
    let cells = density.as_ref().map(cell_densities).unwrap_or_default();
    let report = assemble_report(t_ref, horizons, cells, &cfg.risk, warnings);
    Ok(PipelineOutput {
        forecast: rows,
        density,
        report,
    })
}

pub const FORECAST_FILE: &str = "forecast.csv";
pub const REPORT_TEXT_FILE: &str = "risk_report.txt";
pub const REPORT_JSON_FILE: &str = "risk_report.json";
pub const DENSITY_FILE: &str = "density.csv";

/// Writes the forecast CSV, both report forms and the density CSV into `dir`.
pub fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    write(FORECAST_FILE, forecast_to_csv(&out.forecast))?;
    write(REPORT_TEXT_FILE, out.report.to_text())?;
    write(REPORT_JSON_FILE, out.report.to_json())?;
    if let Some(d) = &out.density {
        write(DENSITY_FILE, d.to_csv())?;
    }
    Ok(())
}
