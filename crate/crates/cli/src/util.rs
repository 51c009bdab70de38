//! Shared helpers: output paths, settings and CSV series.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bogwatch_core::imaging::io::is_image_path;
use bogwatch_core::pipeline::{BerryConfig, NowcastConfig};
use serde::Deserialize;

/// Stage parameters read from a pipeline config; input paths and risk settings are ignored.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub seed: u64,
    #[serde(flatten)]
    pub nowcast: NowcastConfig,
    pub berry: BerryConfig,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// `--out` as a file: used as given when it has an extension, otherwise
/// `default_name` inside it. Without `--out` the file goes in the working directory.
pub fn out_file(out: Option<&Path>, default_name: &str) -> Result<PathBuf> {
    let path = match out {
        Some(p) if p.extension().is_some() => p.to_path_buf(),
        Some(p) => p.join(default_name),
        None => PathBuf::from(default_name),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(path)
}

/// `--out` as a directory, created if missing.
pub fn out_dir(out: Option<&Path>, default: &str) -> Result<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// A single image, or every image in a directory in file-name order.
pub fn list_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_path(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("{} holds no images", input.display());
    }
    Ok(paths)
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// A keyed numeric column read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub keys: Vec<String>,
    pub values: Vec<f64>,
}

/// Reads `column` (the last column when `None`) keyed by the first column.
pub fn read_series(path: &Path, column: Option<&str>) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header = rdr.headers().with_context(|| format!("reading {}", path.display()))?.clone();
    if header.len() < 2 {
        bail!("{}: need a key column and a value column", path.display());
    }
    let col = match column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: no column {name:?}", path.display()))?,
        None => header.len() - 1,
    };
    let (mut keys, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{}:{line}", path.display()))?;
        let raw = rec.get(col).unwrap_or_default();
        let v: f64 = raw
            .parse()
            .with_context(|| format!("{}:{line}: {:?} is not a number", path.display(), raw))?;
        keys.push(rec.get(0).unwrap_or_default().to_string());
        values.push(v);
    }
    Ok(Series { keys, values })
}

/// Pairs truth and prediction values on matching keys, in truth order.
pub fn align(truth: &Series, pred: &Series) -> Result<(Vec<f64>, Vec<f64>)> {
    let index: HashMap<&str, f64> = pred.keys.iter().map(String::as_str).zip(pred.values.iter().copied()).collect();
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for (k, &v) in truth.keys.iter().zip(&truth.values) {
        if let Some(&pv) = index.get(k.as_str()) {
            t.push(v);
            p.push(pv);
        }
    }
    if t.is_empty() {
        bail!("prediction and truth share no keys");
    }
    Ok((t, p))
}
