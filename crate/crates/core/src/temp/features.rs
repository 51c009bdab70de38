use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// One weather-station observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: DateTime<Utc>,
    /// °F
    pub ambient_temp: f64,
    /// mph
    pub wind_speed: f64,
    /// mph
    pub gust_speed: f64,
    /// Degrees clockwise from north, [0, 360).
    pub wind_dir: f64,
    /// %
    pub rel_humidity: f64,
    /// °F
    pub dew_point: f64,
    /// inches
    pub rain: f64,
    /// %
    pub wetness: f64,
    /// W/m²
    pub irradiance: f64,
}

/// Model input columns; wind direction is split into its sine and cosine.
pub const FEATURE_NAMES: [&str; 10] = [
    "ambient_temp",
    "wind_speed",
    "gust_speed",
    "wind_dir_sin",
    "wind_dir_cos",
    "rel_humidity",
    "dew_point",
    "rain",
    "wetness",
    "irradiance",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();
pub const IRRADIANCE_FEATURE: usize = 9;

impl WeatherRecord {
    /// Reasons this record violates the field ranges, if any.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let values = [
            ("ambient_temp", self.ambient_temp),
            ("wind_speed", self.wind_speed),
            ("gust_speed", self.gust_speed),
            ("wind_dir", self.wind_dir),
            ("rel_humidity", self.rel_humidity),
            ("dew_point", self.dew_point),
            ("rain", self.rain),
            ("wetness", self.wetness),
            ("irradiance", self.irradiance),
        ];
        for (name, v) in values {
            if !v.is_finite() {
                out.push(format!("{name} is not finite"));
            }
        }
        if !(0.0..=100.0).contains(&self.rel_humidity) {
            out.push(format!("rel_humidity {} outside [0, 100]", self.rel_humidity));
        }
        if !(0.0..=100.0).contains(&self.wetness) {
            out.push(format!("wetness {} outside [0, 100]", self.wetness));
        }
        if !(self.irradiance >= 0.0) {
            out.push(format!("irradiance {} is negative", self.irradiance));
        }
        if !(0.0..360.0).contains(&self.wind_dir) {
            out.push(format!("wind_dir {} outside [0, 360)", self.wind_dir));
        }
        for (name, v) in [("wind_speed", self.wind_speed), ("gust_speed", self.gust_speed), ("rain", self.rain)] {
            if v < 0.0 {
                out.push(format!("{name} {v} is negative"));
            }
        }
        out
    }

    pub fn features(&self) -> [f64; N_FEATURES] {
        let dir = self.wind_dir.to_radians();
        [
            self.ambient_temp,
            self.wind_speed,
            self.gust_speed,
            dir.sin(),
            dir.cos(),
            self.rel_humidity,
            self.dew_point,
            self.rain,
            self.wetness,
            self.irradiance,
        ]
    }

    /// Copy with the irradiance replaced, e.g. by a forecast value.
    pub fn with_irradiance(&self, irradiance: f64) -> Self {
        Self { irradiance, ..*self }
    }
}

/// Feature rows for a slice of records.
pub fn feature_matrix(records: &[WeatherRecord]) -> Vec<Vec<f64>> {
    records.iter().map(|r| r.features().to_vec()).collect()
}
