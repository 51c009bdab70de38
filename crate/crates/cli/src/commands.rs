//! Subcommand implementations.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bogwatch_core::berry::{count, count_error, density_map, load_mask, Extent, WatershedParams};
use bogwatch_core::imaging::io::{load_raster, save_flow, save_raster};
use bogwatch_core::metrics::{self, R2Variant};
use bogwatch_core::pipeline::{
    count_tiles, forecast_from_frames, forecast_to_csv, format_timestamp, join_targets, read_frames, read_targets,
    read_tiles, read_weather, run_pipeline, segment, sub_seed, tile_extent, validated_flow, write_demo, write_outputs,
    DemoOptions, PipelineConfig, Stream, DEMO_TEMP_MODEL, DENSITY_FILE, FORECAST_FILE, FRAMES_MANIFEST,
    REPORT_TEXT_FILE,
};
use bogwatch_core::pipeline::sim::FieldScenario;
use bogwatch_core::solar::{fit_clear_sky, sun_position, ClearSkyModel, Site};
use bogwatch_core::temp::{
    rank_features, temporal_cv, ForestConfig, MlpConfig, TempModel, TempModelConfig, FEATURE_NAMES,
};
use bogwatch_core::{FisheyeCamera, Raster};

use crate::util::{align, file_name, file_stem, list_images, out_dir, out_file, read_series, Settings};
use crate::{
    Cli, ClearskyFitArgs, Command, CountArgs, DensityArgs, EvalArgs, FlowArgs, ForecastArgs, PredictTempArgs,
    SegmentArgs, SimulateArgs, TrainTempArgs, WatershedArgs,
};

/// Held-out fraction of each temporal cross-validation fold.
const CV_TEST_FRAC: f64 = 0.2;

pub fn dispatch(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Run => return run(cli),
        Command::Simulate(a) => return simulate(a, cli.seed.unwrap_or(0), out),
        _ => {}
    }
    let settings = Settings::load(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(settings.seed);
    match &cli.command {
        Command::SegmentClouds(a) => segment_clouds(a, &settings, out),
        Command::Flow(a) => flow(a, &settings, out),
        Command::Forecast(a) => forecast(a, &settings, out),
        Command::ClearskyFit(a) => clearsky_fit(a, out),
        Command::TrainTemp(a) => train_temp(a, seed, out),
        Command::PredictTemp(a) => predict_temp(a, out),
        Command::CountBerries(a) => count_berries(a, &settings, out),
        Command::DensityMap(a) => density(a, &settings, out),
        Command::Eval(a) => eval(a, out),
        Command::Run | Command::Simulate(_) => unreachable!(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes to the `--out` file when given, otherwise to stdout.
fn emit(out: Option<&Path>, default_name: &str, text: &str) -> Result<()> {
    match out {
        Some(_) => {
            let path = out_file(out, default_name)?;
            write_text(&path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn segment_clouds(a: &SegmentArgs, s: &Settings, out: Option<&Path>) -> Result<()> {
    let mut params = s.nowcast.cloud;
    params.threshold = a.threshold.unwrap_or(params.threshold);
    params.steepness = a.steepness.unwrap_or(params.steepness);
    let camera = a.camera.as_deref().map(FisheyeCamera::load).transpose()?;
    let dir = out_dir(out, ".")?;
    for path in list_images(&a.input)? {
        let frame = load_raster(&path)?;
        let prob = match &camera {
            Some(c) => segment(&frame, c, &params)?,
            None => bogwatch_core::cloud::cloud_probability(&frame, &params)?,
        };
        let target = dir.join(format!("{}_cloud.png", file_stem(&path)));
        save_raster(prob.raster(), &target)?;
        println!("{}\tmean cloud probability {:.4}", target.display(), prob.raster().mean());
    }
    Ok(())
}

/// Frames in `frames.csv` order when the manifest exists, otherwise by file name.
fn ordered_frames(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    if dir.join(FRAMES_MANIFEST).is_file() {
        let frames = read_frames(dir)?;
        for w in &frames.warnings {
            log::warn!("{w}");
        }
        Ok(frames.records.into_iter().map(|f| f.path).collect())
    } else {
        list_images(dir)
    }
}

fn flow(a: &FlowArgs, s: &Settings, out: Option<&Path>) -> Result<()> {
    let mut cfg = s.nowcast.flow;
    cfg.lk.levels = a.levels.unwrap_or(cfg.lk.levels);
    cfg.lk.window = a.window.unwrap_or(cfg.lk.window);
    cfg.lk.iterations = a.iterations.unwrap_or(cfg.lk.iterations);
    cfg.consistency_tol_px = a.tol.unwrap_or(cfg.consistency_tol_px);
    let frames = ordered_frames(&a.input)?;
    if frames.len() < 2 {
        bail!("{} holds fewer than two frames", a.input.display());
    }
    let dir = out_dir(out, ".")?;
    let mut prev = load_raster(&frames[0])?;
    for (i, path) in frames.iter().enumerate().skip(1) {
        let next = load_raster(path)?;
        let field = validated_flow(&prev, &next, None, &s.nowcast.cloud, &cfg)?;
        let stem = format!("flow_{:04}", i - 1);
        save_flow(&field, dir.join(format!("{stem}.png")), dir.join(format!("{stem}_valid.png")))?;
        let mean = field
            .mean_valid()
            .map(|(u, v)| format!("({u:.3}, {v:.3}) px"))
            .unwrap_or_else(|| "none".into());
        println!(
            "{stem}\t{} -> {}\tvalid {:.1}%\tmean {mean}",
            file_name(&frames[i - 1]),
            file_name(path),
            100.0 * field.valid_fraction()
        );
        prev = next;
    }
    Ok(())
}

fn forecast(a: &ForecastArgs, s: &Settings, out: Option<&Path>) -> Result<()> {
    let mut cfg = s.nowcast;
    cfg.forecast.horizon_s = a.horizon.unwrap_or(cfg.forecast.horizon_s);
    cfg.forecast.step_s = a.step.unwrap_or(cfg.forecast.step_s);
    cfg.forecast.attenuation = a.attenuation.unwrap_or(cfg.forecast.attenuation);
    let site = Site::load(&a.site)?;
    let camera = site.orient(&FisheyeCamera::load(&a.camera)?)?;
    let clear_sky = match &a.clear_sky {
        Some(p) => ClearSkyModel::load(p)?,
        None => ClearSkyModel::default(),
    };
    let frames = read_frames(&a.sky)?;
    for w in &frames.warnings {
        log::warn!("{w}");
    }
    let [.., prev, last] = frames.records.as_slice() else {
        bail!("{} lists fewer than two frames", a.sky.join(FRAMES_MANIFEST).display());
    };
    let (rows, warnings) = forecast_from_frames(
        &load_raster(&prev.path)?,
        &load_raster(&last.path)?,
        prev.timestamp,
        last.timestamp,
        &camera,
        &site,
        &clear_sky,
        &cfg,
    )?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let path = out_file(out, FORECAST_FILE)?;
    write_text(&path, &forecast_to_csv(&rows))?;
    println!("wrote {} ({} steps from {})", path.display(), rows.len(), format_timestamp(last.timestamp));
    Ok(())
}

fn clearsky_fit(a: &ClearskyFitArgs, out: Option<&Path>) -> Result<()> {
    let site = Site::load(&a.site)?;
    let weather = read_weather(&a.weather)?;
    for w in &weather.warnings {
        log::warn!("{w}");
    }
    let suns: Vec<_> = weather
        .records
        .iter()
        .map(|r| sun_position(r.timestamp, site.lat, site.lon))
        .collect();
    let irradiance: Vec<f64> = weather.records.iter().map(|r| r.irradiance).collect();
    let model = fit_clear_sky(&suns, &irradiance, a.quantile)?;
    let path = out_file(out, "clear_sky.toml")?;
    model.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn train_temp(a: &TrainTempArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let weather = read_weather(&a.weather)?;
    let targets = read_targets(&a.target)?;
    for w in weather.warnings.iter().chain(&targets.warnings) {
        log::warn!("{w}");
    }
    let (x, y) = join_targets(&weather.records, &targets.records);
    if x.is_empty() {
        bail!("no weather rows share a timestamp with {}", a.target.display());
    }
    let forest_default = ForestConfig::default();
    let mlp_default = MlpConfig::default();
    let cfg = TempModelConfig {
        kind: a.model,
        forest: ForestConfig {
            n_trees: a.trees.unwrap_or(forest_default.n_trees),
            max_depth: a.max_depth.or(forest_default.max_depth),
            seed: sub_seed(seed, Stream::Forest),
            ..forest_default
        },
        mlp: MlpConfig {
            epochs: a.epochs.unwrap_or(mlp_default.epochs),
            learning_rate: a.learning_rate.unwrap_or(mlp_default.learning_rate),
            seed: sub_seed(seed, Stream::Mlp),
            ..mlp_default
        },
    };
    println!("{} samples, model {:?}", x.len(), a.model);
    if a.cv_folds > 0 {
        let cv = temporal_cv(&x, &y, a.cv_folds, CV_TEST_FRAC, &cfg)?;
        println!("fold\ttest_start\ttest_len\tr2\tmae_f\tmape_pct");
        for (i, f) in cv.folds.iter().enumerate() {
            println!("{i}\t{}\t{}\t{:.4}\t{:.3}\t{:.3}", f.test_start, f.test_len, f.r2, f.mae, f.mape);
        }
        println!("mean\t\t\t{:.4}\t{:.3}\t{:.3}", cv.mean_r2, cv.mean_mae, cv.mean_mape);
    }
    let model = TempModel::train(&x, &y, &cfg)?;
    if let TempModel::Forest(f) = &model {
        let ranking = rank_features(f.importances(), &FEATURE_NAMES)?;
        println!("feature ranking: {}", ranking.join(" > "));
    }
    let path = out_file(out, DEMO_TEMP_MODEL)?;
    model.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn predict_temp(a: &PredictTempArgs, out: Option<&Path>) -> Result<()> {
    let model = TempModel::load(&a.model)?;
    let weather = read_weather(&a.weather)?;
    for w in &weather.warnings {
        log::warn!("{w}");
    }
    let mut text = String::from("timestamp_utc,berry_temp_f\n");
    for r in &weather.records {
        let r = a.irradiance.map(|v| r.with_irradiance(v)).unwrap_or(*r);
        let _ = writeln!(text, "{},{:.3}", format_timestamp(r.timestamp), model.predict_record(&r)?);
    }
    emit(out, "berry_temp.csv", &text)
}

fn watershed_params(base: WatershedParams, a: &WatershedArgs) -> WatershedParams {
    WatershedParams {
        min_split_area: a.min_split_area.unwrap_or(base.min_split_area),
        min_marker_sep: a.min_marker_sep.unwrap_or(base.min_marker_sep),
        ..base
    }
}

fn read_truth_counts(path: &Path) -> Result<HashMap<String, usize>> {
    #[derive(serde::Deserialize)]
    struct Row {
        filename: String,
        true_count: usize,
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("{}:{}", path.display(), i + 2))?;
        out.insert(row.filename, row.true_count);
    }
    Ok(out)
}

fn count_berries(a: &CountArgs, s: &Settings, out: Option<&Path>) -> Result<()> {
    let params = watershed_params(s.berry.watershed, &a.watershed);
    let is_manifest = a.input.is_file() && a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let masks = if is_manifest {
        read_tiles(&a.input)?.into_iter().map(|t| t.path).collect()
    } else {
        list_images(&a.input)?
    };
    let mut text = String::from("filename,count\n");
    let mut counts = Vec::with_capacity(masks.len());
    for path in &masks {
        let n = count(&load_mask(path)?, &params);
        let _ = writeln!(text, "{},{n}", file_name(path));
        counts.push((file_name(path), n));
    }
    emit(out, "counts.csv", &text)?;
    if let Some(truth_path) = &a.truth {
        let truth = read_truth_counts(truth_path)?;
        let mut pred = Vec::new();
        let mut want = Vec::new();
        for (name, n) in &counts {
            let t = truth
                .get(name)
                .ok_or_else(|| anyhow!("{} has no count for {name}", truth_path.display()))?;
            pred.push(*n);
            want.push(*t);
        }
        eprintln!("count MAE {:.4} over {} images", count_error(&pred, &want)?, pred.len());
    }
    Ok(())
}

fn density(a: &DensityArgs, s: &Settings, out: Option<&Path>) -> Result<()> {
    let params = watershed_params(s.berry.watershed, &a.watershed);
    let cell = a.cell.unwrap_or(s.berry.cell_size_m);
    let tiles = count_tiles(&a.manifest, &params)?;
    let extent = match &a.extent {
        Some(v) => Extent {
            min_easting: v[0],
            min_northing: v[1],
            max_easting: v[2],
            max_northing: v[3],
        },
        None => s
            .berry
            .extent
            .or_else(|| tile_extent(&tiles, cell))
            .ok_or_else(|| anyhow!("{} lists no tiles", a.manifest.display()))?,
    };
    let map = density_map(&tiles, cell, extent)?;
    let path = out_file(out, DENSITY_FILE)?;
    write_text(&path, &map.to_csv())?;
    println!("wrote {} ({} x {} cells, {} tiles)", path.display(), map.cols(), map.rows(), tiles.len());
    if let Some(heat) = &a.heat {
        save_raster(&map.heat_image(), heat)?;
        println!("wrote {}", heat.display());
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let defaults = DemoOptions::default();
    let opts = DemoOptions {
        scenario: a.scenario.clone(),
        frames: a.frames,
        frame_dt_s: a.frame_dt,
        weather_days: a.weather_days,
        field: FieldScenario {
            tiles: a.tiles,
            dense_tile: defaults.field.dense_tile.filter(|&i| i < a.tiles),
            ..defaults.field.clone()
        },
        temp_threshold_f: a.temp_threshold,
        ..defaults
    };
    if opts.frames < 2 {
        bail!("--frames must be at least 2");
    }
    let dir = out_dir(out, "bogwatch-sim")?;
    write_demo(&dir, seed, &opts)?;
    println!("wrote simulated inputs to {}", dir.display());
    println!(
        "next: bogwatch train-temp --weather {0}/weather.csv --target {0}/targets.csv --out {0}/{1}",
        dir.display(),
        DEMO_TEMP_MODEL
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli.config.as_deref().ok_or_else(|| anyhow!("run needs --config"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let output = run_pipeline(&cfg)?;
    for w in &output.report.warnings {
        log::warn!("{w}");
    }
    let dir = out_dir(cli.out.as_deref(), ".")?;
    write_outputs(&output, &dir)?;
    print!("{}", output.report.to_text());
    println!("wrote {} and {} to {}", FORECAST_FILE, REPORT_TEXT_FILE, dir.display());
    Ok(())
}

fn eval(a: &EvalArgs, out: Option<&Path>) -> Result<()> {
    let mut results = BTreeMap::new();
    let series_metrics: Vec<&str> = a.metrics.iter().map(String::as_str).filter(|m| *m != "iou").collect();
    if a.metrics.iter().any(|m| m == "iou") {
        let (pred, truth): (Raster, Raster) = (load_mask(&a.pred)?, load_mask(&a.truth)?);
        results.insert("iou".to_string(), metrics::mean_iou(&pred, &truth)?);
    }
    if !series_metrics.is_empty() {
        let truth = read_series(&a.truth, a.column.as_deref())?;
        let pred = read_series(&a.pred, a.column.as_deref())?;
        let (t, p) = align(&truth, &pred)?;
        for m in series_metrics {
            let value = match m {
                "mape" if a.normalized => metrics::mape_normalized(&t, &p)?,
                "mape" => metrics::mape(&t, &p)?,
                "r2" => {
                    let variant = if a.r2_norm_ratio { R2Variant::NormRatio } else { R2Variant::Squared };
                    metrics::r_squared_with(&t, &p, variant)?
                }
                "frechet" => metrics::frechet_series(&t, &p)?,
                "mae" => metrics::mae(&t, &p)?,
                other => bail!("unknown metric {other:?} (mape, r2, frechet, mae, iou)"),
            };
            results.insert(m.to_string(), value);
        }
        println!("{} aligned points", t.len());
    }
    for (name, value) in &results {
        println!("{name}\t{value:.6}");
    }
    if out.is_some() {
        let path = out_file(out, "metrics.json")?;
        write_text(&path, &(serde_json::to_string_pretty(&results)? + "\n"))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
