//! Berry instance extraction from segmentation masks, counting and field
//! density maps.

mod components;
mod density;
mod watershed;

use std::path::Path;

use serde::Deserialize;

pub use components::{connected_components, LabeledBlobs};
pub use density::{density_map, CountDensityMap, Extent, TileCount};
pub use watershed::{count, distance_transform, selective_watershed, WatershedParams};

use crate::error::{Error, Result};
use crate::imaging::{Pixel, Raster};

/// Mean absolute error between predicted and true per-image counts.
pub fn count_error(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predicted counts for {} annotated images",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let total: usize = predictions.iter().zip(truth).map(|(&p, &t)| p.abs_diff(t)).sum();
    Ok(total as f64 / predictions.len() as f64)
}

/// Point annotations of one image: berries (positive) and background (negative).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationPoints {
    pub positive: Vec<Pixel>,
    pub negative: Vec<Pixel>,
}

impl AnnotationPoints {
    pub fn new(positive: Vec<Pixel>, negative: Vec<Pixel>, width: usize, height: usize) -> Result<Self> {
        let inside = |p: &Pixel| p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64;
        if let Some(p) = positive.iter().chain(&negative).find(|p| !inside(p)) {
            return Err(Error::OutOfField { x: p.x, y: p.y });
        }
        if positive.iter().any(|p| negative.contains(p)) {
            return Err(Error::InvalidParameter("a point is annotated both positive and negative".into()));
        }
        Ok(Self { positive, negative })
    }

    /// True count `|p_p|`.
    pub fn count(&self) -> usize {
        self.positive.len()
    }

    /// Reads `x,y,label` CSV rows with label `positive` or `negative`.
    pub fn load(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            y: f64,
            label: String,
        }
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
        let (mut positive, mut negative) = (Vec::new(), Vec::new());
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
            match row.label.as_str() {
                "positive" => positive.push(Pixel::new(row.x, row.y)),
                "negative" => negative.push(Pixel::new(row.x, row.y)),
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: format!("label must be positive or negative, got {other:?}"),
                    })
                }
            }
        }
        Self::new(positive, negative, width, height)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,label\n");
        for (points, label) in [(&self.positive, "positive"), (&self.negative, "negative")] {
            for p in points {
                s.push_str(&format!("{},{},{label}\n", p.x, p.y));
            }
        }
        s
    }
}

/// Loads a mask image; values of at least one half (8-bit ≥ 128) are foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Raster> {
    let raster = crate::imaging::io::load_raster(path)?;
    let gray = if raster.channels() == 1 { raster } else { raster.to_gray() };
    Ok(Raster::mask_from_fn(gray.width(), gray.height(), |x, y| gray.at(x, y) >= 127.5 / 255.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_error_examples() {
        assert_eq!(count_error(&[3, 5], &[3, 5]).unwrap(), 0.0);
        assert_eq!(count_error(&[3, 5], &[4, 5]).unwrap(), 0.5);
        assert!(matches!(count_error(&[1], &[1, 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn annotations_validate_and_round_trip() {
        let a = AnnotationPoints::new(vec![Pixel::new(1.0, 2.0)], vec![Pixel::new(3.0, 3.0)], 10, 10).unwrap();
        assert_eq!(a.count(), 1);
        assert!(AnnotationPoints::new(vec![Pixel::new(11.0, 2.0)], vec![], 10, 10).is_err());
        assert!(AnnotationPoints::new(vec![Pixel::new(1.0, 1.0)], vec![Pixel::new(1.0, 1.0)], 10, 10).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, a.to_csv()).unwrap();
        assert_eq!(AnnotationPoints::load(&path, 10, 10).unwrap(), a);
    }
}
