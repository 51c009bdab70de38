//! Writes a complete simulated input directory that `run` can consume.

use std::path::{Path, PathBuf};

use chrono::Duration;

use super::config::{sub_seed, BerryConfig, Inputs, NowcastConfig, PipelineConfig, RiskConfig, Stream};
use super::ingest::{format_timestamp, targets_to_csv, weather_to_csv, TargetRecord, FRAMES_MANIFEST};
use super::sim::{scenario_suite, simulate_field, simulate_sky, simulate_weather, FieldScenario, TempCoefficients};
use crate::error::{Error, Result};
use crate::imaging::io::save_raster;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    /// One of the scenario suite names.
    pub scenario: String,
    pub frames: usize,
    pub frame_dt_s: f64,
    /// Days of 5-minute weather history ending at the first frame.
    pub weather_days: usize,
    pub field: FieldScenario,
    pub temp: TempCoefficients,
    pub temp_threshold_f: f64,
    pub count_threshold: f64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            scenario: "opaque-crossing".into(),
            frames: 4,
            frame_dt_s: 5.0,
            weather_days: 14,
            field: FieldScenario {
                dense_tile: Some(5),
                overlapping_pairs: (0, 1),
                ..FieldScenario::default()
            },
            temp: TempCoefficients::default(),
            temp_threshold_f: 113.0,
            count_threshold: 15.0,
        }
    }
}

pub const DEMO_CONFIG: &str = "config.toml";
pub const DEMO_TEMP_MODEL: &str = "temp_model.txt";

fn write(path: PathBuf, text: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes sky frames, camera, site, weather, targets, field tiles and a config
/// into `dir`. The temperature model path in the config is not created here.
pub fn write_demo(dir: &Path, seed: u64, opts: &DemoOptions) -> Result<PipelineConfig> {
    let sim_seed = sub_seed(seed, Stream::Simulator);
    let suite = scenario_suite(sim_seed)?;
    let sc = suite
        .iter()
        .find(|s| s.name == opts.scenario)
        .ok_or_else(|| {
            let names: Vec<&str> = suite.iter().map(|s| s.name.as_str()).collect();
            Error::InvalidParameter(format!("unknown scenario {:?} (one of {})", opts.scenario, names.join(", ")))
        })?;
    let seq = simulate_sky(sc, opts.frames, opts.frame_dt_s)?;
    let sky = dir.join("sky");
    let mut manifest = String::from("filename,timestamp_utc\n");
    let mut truth = String::from("timestamp_utc,irradiance_wm2\n");
    for (i, (t, frame)) in seq.timestamps.iter().zip(&seq.frames).enumerate() {
        let name = format!("frame_{i:04}.png");
        std::fs::create_dir_all(&sky).map_err(|e| Error::io(&sky, e))?;
        save_raster(frame, sky.join(&name))?;
        manifest.push_str(&format!("{name},{}\n", format_timestamp(*t)));
    }
    write(sky.join(FRAMES_MANIFEST), manifest)?;
    let t_ref = *seq.timestamps.last().expect("at least two frames");
    for k in 0..=40 {
        let t = t_ref + Duration::seconds(30 * k);
        truth.push_str(&format!("{},{:.3}\n", format_timestamp(t), sc.exact_irradiance(t)?));
    }
    write(sky.join("irradiance_truth.csv"), truth)?;
    write(dir.join("camera.toml"), sc.camera()?.to_toml_string())?;
    write(dir.join("site.toml"), sc.site.to_toml_string())?;

    let rows = opts.weather_days * 288 + 1;
    let start = sc.start - Duration::days(opts.weather_days as i64);
    let (weather, temps) = simulate_weather(sim_seed, &sc.site, start, rows, 300, &sc.clear_sky, &opts.temp)?;
    write(dir.join("weather.csv"), weather_to_csv(&weather))?;
    let targets: Vec<TargetRecord> = weather
        .iter()
        .zip(&temps)
        .map(|(w, &berry_temp)| TargetRecord {
            timestamp: w.timestamp,
            berry_temp,
        })
        .collect();
    write(dir.join("targets.csv"), targets_to_csv(&targets))?;

    let field = FieldScenario {
        seed: sim_seed,
        ..opts.field.clone()
    };
    let tiles = simulate_field(&field)?;
    let tile_dir = dir.join("tiles");
    std::fs::create_dir_all(&tile_dir).map_err(|e| Error::io(&tile_dir, e))?;
    let mut tile_manifest = String::from("filename,easting_m,northing_m\n");
    let mut counts = String::from("filename,true_count\n");
    for t in &tiles {
        save_raster(&t.mask(), tile_dir.join(&t.filename))?;
        tile_manifest.push_str(&format!("{},{:.3},{:.3}\n", t.filename, t.easting, t.northing));
        counts.push_str(&format!("{},{}\n", t.filename, t.true_count()));
    }
    write(tile_dir.join("manifest.csv"), tile_manifest)?;
    write(tile_dir.join("counts.csv"), counts)?;

    let cfg = PipelineConfig {
        seed,
        inputs: Inputs {
            sky_dir: "sky".into(),
            camera: "camera.toml".into(),
            site: "site.toml".into(),
            weather: "weather.csv".into(),
            temp_model: DEMO_TEMP_MODEL.into(),
            clear_sky: None,
            tiles: Some("tiles/manifest.csv".into()),
        },
        nowcast: NowcastConfig::default(),
        berry: BerryConfig {
            cell_size_m: field.spacing_m,
            ..Default::default()
        },
        risk: RiskConfig {
            temp_threshold_f: opts.temp_threshold_f,
            count_threshold: opts.count_threshold,
            stale_after_min: 30.0,
        },
    };
    write(dir.join(DEMO_CONFIG), cfg.to_toml_string())?;
    Ok(cfg)
}
