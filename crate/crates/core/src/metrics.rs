//! Evaluation metrics: MAPE, R², MAE, discrete Fréchet distance and mIoU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Raster;

/// Denominator guard for MAPE on normalized series.
pub const NORMALIZED_MAPE_EPS: f64 = 1e-6;

/// Ground truth and prediction of equal, non-zero length.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPair {
    truth: Vec<f64>,
    pred: Vec<f64>,
}

impl SeriesPair {
    pub fn new(truth: Vec<f64>, pred: Vec<f64>) -> Result<Self> {
        check_pair(&truth, &pred)?;
        Ok(Self { truth, pred })
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn pred(&self) -> &[f64] {
        &self.pred
    }

    pub fn normalized(&self) -> SeriesPair {
        SeriesPair {
            truth: normalize_minmax(&self.truth),
            pred: normalize_minmax(&self.pred),
        }
    }
}

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "truth has {} values, prediction {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Shape("series must not be empty".into()));
    }
    Ok(())
}

/// `(s − min) / (max − min)`; a constant series maps to zeros.
pub fn normalize_minmax(s: &[f64]) -> Vec<f64> {
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) {
        return vec![0.0; s.len()];
    }
    s.iter().map(|v| (v - min) / range).collect()
}

/// Mean absolute percentage error, in percent.
pub fn mape(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let zeros: Vec<usize> = truth
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == 0.0)
        .map(|(i, _)| i)
        .collect();
    if !zeros.is_empty() {
        return Err(Error::ZeroTruth(zeros));
    }
    let sum: f64 = truth.iter().zip(pred).map(|(t, p)| ((t - p) / t).abs()).sum();
    Ok(100.0 * sum / truth.len() as f64)
}

/// MAPE after min-max normalizing each series, with `|ỹ| + ε` as denominator.
pub fn mape_normalized(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let (t, p) = (normalize_minmax(truth), normalize_minmax(pred));
    let sum: f64 = t
        .iter()
        .zip(&p)
        .map(|(t, p)| (t - p).abs() / (t.abs() + NORMALIZED_MAPE_EPS))
        .sum();
    Ok(100.0 * sum / t.len() as f64)
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    Ok(truth.iter().zip(pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum R2Variant {
    /// `1 − Σ(ỹ − y)² / Σ(ỹ − ȳ)²`.
    #[default]
    Squared,
    /// `1 − ‖ỹ − y‖₂ / ‖ỹ − ȳ‖₂` (ratio of norms, not of squared norms).
    NormRatio,
}

/// Coefficient of determination (squared-norm form).
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    r_squared_with(truth, pred, R2Variant::Squared)
}

pub fn r_squared_with(truth: &[f64], pred: &[f64], variant: R2Variant) -> Result<f64> {
    check_pair(truth, pred)?;
    if truth.len() < 2 {
        return Err(Error::Shape("R² needs at least two points".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantTruth);
    }
    Ok(match variant {
        R2Variant::Squared => 1.0 - ss_res / ss_tot,
        R2Variant::NormRatio => 1.0 - (ss_res / ss_tot).sqrt(),
    })
}

/// Discrete Fréchet distance between two polylines (Euclidean ground metric).
pub fn frechet(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Shape("Fréchet distance needs non-empty curves".into()));
    }
    let d = |i: usize, j: usize| (a[i].0 - b[j].0).hypot(a[i].1 - b[j].1);
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for i in 0..a.len() {
        for j in 0..m {
            let reach = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]),
            };
            cur[j] = reach.max(d(i, j));
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// Series as a curve of (normalized step, min-max normalized value).
pub fn series_curve(s: &[f64]) -> Vec<(f64, f64)> {
    let n = s.len();
    let denom = (n.max(2) - 1) as f64;
    normalize_minmax(s)
        .into_iter()
        .enumerate()
        .map(|(i, v)| (i as f64 / denom, v))
        .collect()
}

/// Fréchet distance between two series, each min-max normalized on its own.
pub fn frechet_series(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    frechet(&series_curve(truth), &series_curve(pred))
}

/// Mean IoU over the foreground and background classes of two binary masks.
pub fn mean_iou(pred: &Raster, truth: &Raster) -> Result<f64> {
    pred.ensure_same_size(truth, "mean_iou")?;
    let (w, h) = (pred.width(), pred.height());
    let mut inter = [0usize; 2];
    let mut union = [0usize; 2];
    for y in 0..h {
        for x in 0..w {
            let (p, t) = (pred.is_set(x, y) as usize, truth.is_set(x, y) as usize);
            if p == t {
                inter[p] += 1;
                union[p] += 1;
            } else {
                union[0] += 1;
                union[1] += 1;
            }
        }
    }
    let iou = |c: usize| if union[c] == 0 { 1.0 } else { inter[c] as f64 / union[c] as f64 };
    Ok((iou(0) + iou(1)) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minmax_examples() {
        assert_eq!(normalize_minmax(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_minmax(&[5.0, 5.0]), vec![0.0, 0.0]);
        assert_eq!(normalize_minmax(&[0.0, 1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[2.0, 4.0, 5.0], &[2.0, 4.0, 5.0]).unwrap(), 0.0);
        assert!((mape(&[2.0, 4.0, 5.0], &[2.0, 5.0, 4.0]).unwrap() - 15.0).abs() < 1e-12);
        assert_eq!(mape(&[1.0], &[2.0]).unwrap(), 100.0);
        match mape(&[0.0, 1.0, 0.0], &[1.0, 1.0, 1.0]) {
            Err(Error::ZeroTruth(idx)) => assert_eq!(idx, vec![0, 2]),
            other => panic!("{other:?}"),
        }
        assert!(mape_normalized(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap() < 1e-9);
    }

    #[test]
    fn r_squared_examples() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        assert_eq!(r_squared(&t, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r_squared(&t, &[1.1, 2.0, 2.9]).unwrap() - 0.99).abs() < 1e-12);
        let ratio = r_squared_with(&t, &[1.1, 2.0, 2.9], R2Variant::NormRatio).unwrap();
        assert!((ratio - (1.0 - 0.01f64.sqrt())).abs() < 1e-12);
        assert!(matches!(r_squared(&[4.0, 4.0], &[1.0, 2.0]), Err(Error::ConstantTruth)));
    }

    #[test]
    fn frechet_examples() {
        let a = [(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)];
        assert_eq!(frechet(&a, &a).unwrap(), 0.0);
        assert!((frechet(&[(0.0, 0.0), (1.0, 0.0)], &[(0.0, 1.0), (1.0, 1.0)]).unwrap() - 1.0).abs() < 1e-12);
        assert!((frechet(&[(0.0, 0.0)], &[(3.0, 4.0)]).unwrap() - 5.0).abs() < 1e-12);
        assert!(frechet(&[], &a).is_err());
    }

    #[test]
    fn mean_iou_examples() {
        let m = |fg: &[usize]| Raster::mask_from_fn(4, 1, |x, _| fg.contains(&x));
        assert_eq!(mean_iou(&m(&[0, 1]), &m(&[0, 1])).unwrap(), 1.0);
        assert!((mean_iou(&m(&[1, 2]), &m(&[0, 1])).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(mean_iou(&m(&[]), &m(&[])).unwrap(), 1.0);
        assert!(matches!(
            mean_iou(&m(&[]), &Raster::filled(3, 1, 1, 0.0)),
            Err(Error::Shape(_))
        ));
    }

    fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
        let directed = |a: &[(f64, f64)], b: &[(f64, f64)]| {
            a.iter()
                .map(|p| b.iter().map(|q| (p.0 - q.0).hypot(p.1 - q.1)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        directed(a, b).max(directed(b, a))
    }

    fn curve() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8)
    }

    proptest! {
        #[test]
        fn frechet_is_symmetric_and_bounds_hausdorff(a in curve(), b in curve()) {
            let ab = frechet(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, frechet(&b, &a).unwrap());
            prop_assert!(ab + 1e-12 >= hausdorff(&a, &b));
        }

        #[test]
        fn mean_iou_is_symmetric(bits_a in any::<u32>(), bits_b in any::<u32>()) {
            let a = Raster::mask_from_fn(5, 5, |x, y| bits_a >> (y * 5 + x) & 1 == 1);
            let b = Raster::mask_from_fn(5, 5, |x, y| bits_b >> (y * 5 + x) & 1 == 1);
            prop_assert_eq!(mean_iou(&a, &b).unwrap(), mean_iou(&b, &a).unwrap());
        }

        #[test]
        fn perfect_extra_point_keeps_mape_direction(
            t in proptest::collection::vec(0.5f64..10.0, 1..6),
            noise in proptest::collection::vec(-1.0f64..1.0, 6),
            extra in 0.5f64..10.0,
        ) {
            let p: Vec<f64> = t.iter().zip(&noise).map(|(a, n)| a + n).collect();
            let before = mape(&t, &p).unwrap();
            let (mut t2, mut p2) = (t.clone(), p.clone());
            t2.push(extra);
            p2.push(extra);
            let after = mape(&t2, &p2).unwrap();
            prop_assert!(after <= before + 1e-12);
            prop_assert!((after - before * t.len() as f64 / t2.len() as f64).abs() < 1e-9);
        }
    }
}
