//! Berry temperature regression from weather features.

mod features;
mod forest;
mod mlp;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use features::{feature_matrix, WeatherRecord, FEATURE_NAMES, IRRADIANCE_FEATURE, N_FEATURES};
pub use forest::{rank_features, train_random_forest, ForestConfig, ForestModel, Tree};
pub use mlp::{train_mlp, MlpConfig, MlpModel};

use crate::error::{Error, Result};
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Forest,
    Mlp,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" => Ok(ModelKind::Forest),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::InvalidParameter(format!("unknown model kind {other:?} (forest or mlp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TempModelConfig {
    pub kind: ModelKind,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
}

/// A trained berry temperature model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TempModel {
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl TempModel {
    pub fn train(x: &[Vec<f64>], y: &[f64], cfg: &TempModelConfig) -> Result<Self> {
        Ok(match cfg.kind {
            ModelKind::Forest => TempModel::Forest(train_random_forest(x, y, &cfg.forest)?),
            ModelKind::Mlp => TempModel::Mlp(train_mlp(x, y, &cfg.mlp)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TempModel::Forest(_) => ModelKind::Forest,
            TempModel::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            TempModel::Forest(m) => m.predict(x),
            TempModel::Mlp(m) => m.predict(x),
        }
    }

    pub fn predict_record(&self, r: &WeatherRecord) -> Result<f64> {
        self.predict(&r.features())
    }

    pub fn to_text(&self) -> String {
        match self {
            TempModel::Forest(m) => m.to_text(),
            TempModel::Mlp(m) => m.to_text(),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let header = text.lines().next().unwrap_or_default();
        if header.starts_with("bogwatch-forest") {
            ForestModel::from_text(text).map(TempModel::Forest)
        } else if header.starts_with("bogwatch-mlp") {
            MlpModel::from_text(text).map(TempModel::Mlp)
        } else {
            Err(Error::Data("unrecognised model file header".into()))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::format(path, e))
    }
}

/// Scores on one held-out block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldScore {
    pub test_start: usize,
    pub test_len: usize,
    pub r2: f64,
    pub mae: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldScore>,
    pub mean_r2: f64,
    pub mean_mae: f64,
    pub mean_mape: f64,
}

/// Temporal cross-validation: each fold holds out one contiguous block of
/// `test_frac` of the (time-ordered) samples, at evenly spaced offsets from the
/// start to the end of the series, and trains on the rest.
pub fn temporal_cv(
    x: &[Vec<f64>],
    y: &[f64],
    folds: usize,
    test_frac: f64,
    cfg: &TempModelConfig,
) -> Result<CvReport> {
    let n = x.len();
    if folds == 0 || !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::InvalidParameter("need ≥ 1 fold and a test fraction in (0, 1)".into()));
    }
    let test_len = ((n as f64 * test_frac).round() as usize).max(1);
    if n < test_len + 2 {
        return Err(Error::Data(format!("{n} samples are too few for temporal cross-validation")));
    }
    let mut scores = Vec::with_capacity(folds);
    for k in 0..folds {
        let start = if folds == 1 {
            n - test_len
        } else {
            ((k * (n - test_len)) as f64 / (folds - 1) as f64).round() as usize
        };
        let end = start + test_len;
        let (mut tx, mut ty) = (Vec::with_capacity(n - test_len), Vec::with_capacity(n - test_len));
        for i in (0..start).chain(end..n) {
            tx.push(x[i].clone());
            ty.push(y[i]);
        }
        let model = TempModel::train(&tx, &ty, cfg)?;
        let pred: Vec<f64> = x[start..end].iter().map(|r| model.predict(r)).collect::<Result<_>>()?;
        let truth = &y[start..end];
        scores.push(FoldScore {
            test_start: start,
            test_len,
            r2: metrics::r_squared(truth, &pred)?,
            mae: metrics::mae(truth, &pred)?,
            mape: metrics::mape(truth, &pred)?,
        });
    }
    let mean = |f: fn(&FoldScore) -> f64| scores.iter().map(f).sum::<f64>() / scores.len() as f64;
    Ok(CvReport {
        mean_r2: mean(|s| s.r2),
        mean_mae: mean(|s| s.mae),
        mean_mape: mean(|s| s.mape),
        folds: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_dispatch() {
        let f = TempModel::Forest(ForestModel::from_trees(1, vec![Tree::leaf(3.0)], vec![0.0]).unwrap());
        assert_eq!(TempModel::from_text(&f.to_text()).unwrap(), f);
        assert!(TempModel::from_text("something else").is_err());
        assert_eq!("mlp".parse::<ModelKind>().unwrap(), ModelKind::Mlp);
    }

    #[test]
    fn cv_blocks_cover_the_series() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, ((i * 37) % 11) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 50.0 + r[1] * 2.0).collect();
        let cfg = TempModelConfig {
            forest: ForestConfig {
                n_trees: 10,
                ..ForestConfig::default()
            },
            ..TempModelConfig::default()
        };
        let report = temporal_cv(&x, &y, 5, 0.3, &cfg).unwrap();
        let starts: Vec<usize> = report.folds.iter().map(|f| f.test_start).collect();
        assert_eq!(starts, vec![0, 18, 35, 53, 70]);
        assert!(report.folds.iter().all(|f| f.test_len == 30));
        assert!(report.mean_r2 > 0.9, "{report:?}");
    }
}
