//! Fused crop-risk report.

use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::Serialize;

use super::config::RiskConfig;
use super::ingest::format_timestamp;
use crate::berry::CountDensityMap;

/// Predicted berry temperature at one forecast step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonRisk {
    pub timestamp: DateTime<Utc>,
    pub horizon_s: f64,
    pub irradiance_wm2: f64,
    pub predicted_temp_f: f64,
    pub at_risk: bool,
}

/// Mean exposed-berry count of one grid cell with at least one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellDensity {
    pub col: usize,
    pub row: usize,
    pub easting_m: f64,
    pub northing_m: f64,
    pub images: u32,
    pub mean_count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlaggedCell {
    pub col: usize,
    pub row: usize,
    pub easting_m: f64,
    pub northing_m: f64,
    pub mean_count: f64,
    pub predicted_temp_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub reference_time: DateTime<Utc>,
    pub temp_threshold_f: f64,
    pub count_threshold: f64,
    /// Highest predicted temperature over the horizon, if any step was forecast.
    pub peak_temp_f: Option<f64>,
    pub horizons: Vec<HorizonRisk>,
    pub cells: Vec<CellDensity>,
    pub flagged: Vec<FlaggedCell>,
    pub warnings: Vec<String>,
}

/// A cell is flagged exactly when it is dense and the fruit is predicted hot.
pub fn is_flagged(mean_count: f64, predicted_temp_f: f64, risk: &RiskConfig) -> bool {
    mean_count >= risk.count_threshold && predicted_temp_f >= risk.temp_threshold_f
}

/// Per-cell densities in row-major order (south to north, west to east).
pub fn cell_densities(map: &CountDensityMap) -> Vec<CellDensity> {
    let mut out = Vec::new();
    for row in 0..map.rows() {
        for col in 0..map.cols() {
            if let Some(mean_count) = map.mean(col, row) {
                let (easting_m, northing_m) = map.cell_centre(col, row);
                out.push(CellDensity {
                    col,
                    row,
                    easting_m,
                    northing_m,
                    images: map.images(col, row),
                    mean_count,
                });
            }
        }
    }
    out
}

/// Assembles the report; `horizons` must be in time order.
pub fn assemble_report(
    reference_time: DateTime<Utc>,
    horizons: Vec<(DateTime<Utc>, f64, f64, f64)>,
    cells: Vec<CellDensity>,
    risk: &RiskConfig,
    warnings: Vec<String>,
) -> RiskReport {
    let horizons: Vec<HorizonRisk> = horizons
        .into_iter()
        .map(|(timestamp, horizon_s, irradiance_wm2, predicted_temp_f)| HorizonRisk {
            timestamp,
            horizon_s,
            irradiance_wm2,
            predicted_temp_f,
            at_risk: predicted_temp_f >= risk.temp_threshold_f,
        })
        .collect();
    let peak_temp_f = horizons.iter().map(|h| h.predicted_temp_f).reduce(f64::max);
    let flagged = match peak_temp_f {
        Some(temp) => cells
            .iter()
            .filter(|c| is_flagged(c.mean_count, temp, risk))
            .map(|c| FlaggedCell {
                col: c.col,
                row: c.row,
                easting_m: c.easting_m,
                northing_m: c.northing_m,
                mean_count: c.mean_count,
                predicted_temp_f: temp,
            })
            .collect(),
        None => Vec::new(),
    };
    RiskReport {
        reference_time,
        temp_threshold_f: risk.temp_threshold_f,
        count_threshold: risk.count_threshold,
        peak_temp_f,
        horizons,
        cells,
        flagged,
        warnings,
    }
}

impl RiskReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "bogwatch risk report");
        let _ = writeln!(s, "reference time:     {}", format_timestamp(self.reference_time));
        let _ = writeln!(s, "temp threshold:     {:.1} F", self.temp_threshold_f);
        let _ = writeln!(s, "count threshold:    {:.1} berries/image", self.count_threshold);
        match self.peak_temp_f {
            Some(t) => {
                let _ = writeln!(s, "peak predicted:     {t:.1} F");
            }
            None => {
                let _ = writeln!(s, "peak predicted:     n/a");
            }
        }
        let _ = writeln!(s, "\nwarnings: {}", self.warnings.len());
        for w in &self.warnings {
            let _ = writeln!(s, "  - {w}");
        }
        let _ = writeln!(s, "\nhorizon_s  timestamp             irradiance_wm2  berry_temp_f  at_risk");
        for h in &self.horizons {
            let _ = writeln!(
                s,
                "{:>9.0}  {}  {:>14.1}  {:>12.2}  {}",
                h.horizon_s,
                format_timestamp(h.timestamp),
                h.irradiance_wm2,
                h.predicted_temp_f,
                if h.at_risk { "yes" } else { "no" }
            );
        }
        let _ = writeln!(s, "\ncells with imagery: {}", self.cells.len());
        let _ = writeln!(s, "flagged cells: {}", self.flagged.len());
        if !self.flagged.is_empty() {
            let _ = writeln!(s, "  col  row     easting_m    northing_m  mean_count  berry_temp_f");
            for c in &self.flagged {
                let _ = writeln!(
                    s,
                    "{:>5}  {:>3}  {:>12.1}  {:>12.1}  {:>10.2}  {:>12.2}",
                    c.col, c.row, c.easting_m, c.northing_m, c.mean_count, c.predicted_temp_f
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn risk(temp: f64, count: f64) -> RiskConfig {
        RiskConfig {
            temp_threshold_f: temp,
            count_threshold: count,
            stale_after_min: 30.0,
        }
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 7, 15, 17, 0, 0).unwrap()
    }

    fn cell(col: usize, mean_count: f64) -> CellDensity {
        CellDensity {
            col,
            row: 0,
            easting_m: col as f64 * 10.0,
            northing_m: 0.0,
            images: 1,
            mean_count,
        }
    }

    #[test]
    fn infinite_count_threshold_never_flags() {
        let r = assemble_report(t0(), vec![(t0(), 30.0, 900.0, 130.0)], vec![cell(0, 1e6)], &risk(100.0, f64::INFINITY), vec![]);
        assert!(r.flagged.is_empty());
        assert!(r.horizons[0].at_risk);
    }

    #[test]
    fn text_and_json_are_stable() {
        let r = assemble_report(
            t0(),
            vec![(t0(), 30.0, 800.0, 114.0)],
            vec![cell(0, 3.0), cell(1, 20.0)],
            &risk(113.0, 15.0),
            vec!["stale".into()],
        );
        assert_eq!(r.flagged.len(), 1);
        assert_eq!(r.flagged[0].col, 1);
        assert_eq!(r.to_text(), r.clone().to_text());
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["flagged"][0]["col"], 1);
        assert_eq!(v["reference_time"], "2024-07-15T17:00:00Z");
        assert!(r.to_text().contains("flagged cells: 1"));
    }

    proptest! {
        #[test]
        fn flags_are_exactly_the_conjunction(
            counts in proptest::collection::vec(0.0f64..40.0, 1..30),
            temps in proptest::collection::vec(80.0f64..130.0, 1..10),
            temp_threshold in 90.0f64..125.0,
            count_threshold in 0.0f64..35.0,
        ) {
            let cfg = risk(temp_threshold, count_threshold);
            let cells: Vec<CellDensity> = counts.iter().enumerate().map(|(i, &c)| cell(i, c)).collect();
            let horizons = temps.iter().enumerate().map(|(k, &t)| (t0(), 30.0 * (k + 1) as f64, 500.0, t)).collect();
            let r = assemble_report(t0(), horizons, cells.clone(), &cfg, vec![]);
            let peak = temps.iter().cloned().fold(f64::MIN, f64::max);
            let expected: Vec<usize> = cells
                .iter()
                .filter(|c| c.mean_count >= count_threshold && peak >= temp_threshold)
                .map(|c| c.col)
                .collect();
            prop_assert_eq!(r.flagged.iter().map(|f| f.col).collect::<Vec<_>>(), expected);
            prop_assert!(r.flagged.iter().all(|f| cells.iter().any(|c| c.col == f.col && c.row == f.row)));
        }
    }
}
