//! Pipeline configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::berry::{Extent, WatershedParams};
use crate::cloud::CloudParams;
use crate::error::{Error, Result};
use crate::forecast::ForecastParams;
use crate::motion::{LkParams, MotionWeights, DEFAULT_CONSISTENCY_TOL};
use crate::rng::derive;
use crate::solar::ClearSkyModel;

/// Named random sub-streams derived from the single config seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Simulator,
    Forest,
    Mlp,
}

pub fn sub_seed(seed: u64, stream: Stream) -> u64 {
    derive(seed, stream as u64 + 1)
}

/// Input file locations. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    /// Directory holding sky frames and `frames.csv`.
    pub sky_dir: PathBuf,
    pub camera: PathBuf,
    pub site: PathBuf,
    pub weather: PathBuf,
    pub temp_model: PathBuf,
    /// Clear-sky model file; the analytic default is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clear_sky: Option<PathBuf>,
    /// Field tile manifest; the report has no density grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiles: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    #[serde(flatten)]
    pub lk: LkParams,
    pub consistency_tol_px: f64,
    /// Scale flow by cloud probability before the global motion estimate.
    pub mask_flow: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            lk: LkParams::default(),
            consistency_tol_px: DEFAULT_CONSISTENCY_TOL,
            mask_flow: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BerryConfig {
    #[serde(flatten)]
    pub watershed: WatershedParams,
    pub cell_size_m: f64,
    /// Grid extent; defaults to the tile positions padded by half a cell.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent: Option<Extent>,
}

impl Default for BerryConfig {
    fn default() -> Self {
        Self {
            watershed: WatershedParams::default(),
            cell_size_m: 10.0,
            extent: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// Berry temperature at or above which fruit is at risk, °F. Required;
    /// 113 °F is a reasonable starting point.
    pub temp_threshold_f: f64,
    /// Mean exposed-berry count per image at or above which a cell is dense.
    #[serde(default = "default_count_threshold")]
    pub count_threshold: f64,
    /// Weather older than this at the reference time is flagged as stale, minutes.
    #[serde(default = "default_stale_minutes")]
    pub stale_after_min: f64,
}

fn default_count_threshold() -> f64 {
    15.0
}

fn default_stale_minutes() -> f64 {
    30.0
}

/// Parameters of the sky stages: segmentation, flow, global motion and forecast.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NowcastConfig {
    pub cloud: CloudParams,
    pub flow: FlowConfig,
    pub motion: MotionWeights,
    pub forecast: ForecastParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub inputs: Inputs,
    #[serde(flatten)]
    pub nowcast: NowcastConfig,
    #[serde(default)]
    pub berry: BerryConfig,
    pub risk: RiskConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config and resolves its relative input paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::format(path, e))?;
        cfg.validate()?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [&mut i.sky_dir, &mut i.camera, &mut i.site, &mut i.weather, &mut i.temp_model] {
            fix(p);
        }
        for p in [&mut i.clear_sky, &mut i.tiles].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.risk;
        if !r.temp_threshold_f.is_finite() {
            return Err(Error::InvalidParameter("risk.temp_threshold_f must be finite".into()));
        }
        if r.count_threshold.is_nan() || !(r.stale_after_min >= 0.0) {
            return Err(Error::InvalidParameter("risk thresholds must be numbers".into()));
        }
        if !(self.berry.cell_size_m > 0.0) {
            return Err(Error::InvalidParameter("berry.cell_size_m must be positive".into()));
        }
        let f = &self.nowcast.forecast;
        if !(f.horizon_s >= 0.0 && f.step_s > 0.0 && f.zone_width_frac > 0.0) {
            return Err(Error::InvalidParameter("forecast horizon, step and zone width must be positive".into()));
        }
        Ok(())
    }

    pub fn clear_sky_model(&self) -> Result<ClearSkyModel> {
        match &self.inputs.clear_sky {
            Some(p) => ClearSkyModel::load(p),
            None => Ok(ClearSkyModel::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[inputs]
sky_dir = "sky"
camera = "camera.toml"
site = "site.toml"
weather = "weather.csv"
temp_model = "model.txt"

[risk]
temp_threshold_f = 113.0
"#;

    #[test]
    fn sections_override_defaults() {
        let text = format!("{MINIMAL}\n[forecast]\nhorizon_s = 600.0\n\n[flow]\nwindow = 21\nmask_flow = false\n");
        let cfg = PipelineConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.nowcast.forecast.horizon_s, 600.0);
        assert_eq!(cfg.nowcast.forecast.step_s, 30.0);
        assert_eq!(cfg.nowcast.flow.lk.window, 21);
        assert!(!cfg.nowcast.flow.mask_flow);
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = PipelineConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.risk.count_threshold, 15.0);
        assert_eq!(cfg.nowcast, NowcastConfig::default());
        assert!(cfg.nowcast.flow.mask_flow);
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn temp_threshold_is_required() {
        let text = MINIMAL.replace("temp_threshold_f = 113.0", "count_threshold = 3.0");
        assert!(PipelineConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn count_threshold_may_be_infinite() {
        let text = MINIMAL.replace("temp_threshold_f = 113.0", "temp_threshold_f = 113.0\ncount_threshold = inf");
        assert!(PipelineConfig::from_toml_str(&text).unwrap().risk.count_threshold.is_infinite());
    }

    #[test]
    fn relative_paths_resolve_against_the_config() {
        let mut cfg = PipelineConfig::from_toml_str(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/data/run"));
        assert_eq!(cfg.inputs.weather, Path::new("/data/run/weather.csv"));
        assert_eq!(cfg.inputs.tiles, None);
    }

    #[test]
    fn sub_seeds_differ_by_stream() {
        assert_ne!(sub_seed(1, Stream::Forest), sub_seed(1, Stream::Mlp));
        assert_eq!(sub_seed(1, Stream::Simulator), sub_seed(1, Stream::Simulator));
    }
}
