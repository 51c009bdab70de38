//! CSV ingestion for weather, berry-temperature targets, sky-frame and tile manifests.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::temp::WeatherRecord;

pub const WEATHER_HEADER: [&str; 10] = [
    "timestamp",
    "ambient_temp",
    "wind_speed",
    "gust_speed",
    "wind_dir",
    "rel_humidity",
    "dew_point",
    "rain",
    "wetness",
    "irradiance",
];

/// Parsed rows plus non-fatal notes about the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub warnings: Vec<String>,
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("timestamp {s:?} is not RFC 3339: {e}"))
}

/// RFC 3339 in UTC with a `Z` suffix and second precision.
pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::format(path, e))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}, got {}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Parses every data row with `parse`, reporting the 1-based file line on failure.
fn rows<T>(
    path: &Path,
    expected: &[&str],
    mut parse: impl FnMut(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Vec<(usize, T)>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, expected)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let value = parse(&rec).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        out.push((line, value));
    }
    Ok(out)
}

fn field_f64(rec: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<f64, String> {
    let s = rec.get(i).ok_or_else(|| format!("missing column {name}"))?;
    s.parse::<f64>().map_err(|_| format!("{name} value {s:?} is not a number"))
}

/// Sorts by timestamp; shuffled input is accepted with a warning, duplicates are not.
fn order_by_time<T>(
    path: &Path,
    mut rows: Vec<(usize, T)>,
    time: impl Fn(&T) -> DateTime<Utc>,
    warnings: &mut Vec<String>,
) -> Result<Vec<T>> {
    let sorted = rows.windows(2).all(|w| time(&w[0].1) < time(&w[1].1));
    if !sorted {
        rows.sort_by_key(|(line, r)| (time(r), *line));
        if let Some(w) = rows.windows(2).find(|w| time(&w[0].1) == time(&w[1].1)) {
            return Err(Error::Ordering {
                path: path.to_path_buf(),
                message: format!(
                    "lines {} and {} share timestamp {}",
                    w[0].0,
                    w[1].0,
                    format_timestamp(time(&w[0].1))
                ),
            });
        }
        warnings.push(format!("{}: rows were not in time order and have been sorted", path.display()));
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn read_weather(path: impl AsRef<Path>) -> Result<Ingested<WeatherRecord>> {
    let path = path.as_ref();
    let parsed = rows(path, &WEATHER_HEADER, |rec| {
        let f = |i: usize| field_f64(rec, i, WEATHER_HEADER[i]);
        Ok(WeatherRecord {
            timestamp: parse_timestamp(rec.get(0).unwrap_or_default())?,
            ambient_temp: f(1)?,
            wind_speed: f(2)?,
            gust_speed: f(3)?,
            wind_dir: f(4)?,
            rel_humidity: f(5)?,
            dew_point: f(6)?,
            rain: f(7)?,
            wetness: f(8)?,
            irradiance: f(9)?,
        })
    })?;
    let rejected: Vec<(usize, String)> = parsed
        .iter()
        .filter_map(|(line, r)| {
            let v = r.violations();
            (!v.is_empty()).then(|| (*line, v.join("; ")))
        })
        .collect();
    if !rejected.is_empty() {
        return Err(Error::InvalidRows {
            path: path.to_path_buf(),
            rows: rejected,
        });
    }
    let mut warnings = Vec::new();
    let records = order_by_time(path, parsed, |r| r.timestamp, &mut warnings)?;
    Ok(Ingested { records, warnings })
}

pub fn weather_to_csv(records: &[WeatherRecord]) -> String {
    let mut s = WEATHER_HEADER.join(",");
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{:.2},{:.2},{:.2},{:.1},{:.2},{:.2},{:.3},{:.2},{:.2}\n",
            format_timestamp(r.timestamp),
            r.ambient_temp,
            r.wind_speed,
            r.gust_speed,
            // Rounding to the printed precision can reach 360, which reads as 0.
            ((r.wind_dir * 10.0).round() / 10.0).rem_euclid(360.0),
            r.rel_humidity,
            r.dew_point,
            r.rain,
            r.wetness,
            r.irradiance
        ));
    }
    s
}

/// Measured berry temperature at a timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRecord {
    pub timestamp: DateTime<Utc>,
    /// °F
    pub berry_temp: f64,
}

pub const TARGET_HEADER: [&str; 2] = ["timestamp", "berry_temp"];

pub fn read_targets(path: impl AsRef<Path>) -> Result<Ingested<TargetRecord>> {
    let path = path.as_ref();
    let parsed = rows(path, &TARGET_HEADER, |rec| {
        let berry_temp = field_f64(rec, 1, "berry_temp")?;
        if !berry_temp.is_finite() {
            return Err("berry_temp is not finite".into());
        }
        Ok(TargetRecord {
            timestamp: parse_timestamp(rec.get(0).unwrap_or_default())?,
            berry_temp,
        })
    })?;
    let mut warnings = Vec::new();
    let records = order_by_time(path, parsed, |r| r.timestamp, &mut warnings)?;
    Ok(Ingested { records, warnings })
}

pub fn targets_to_csv(records: &[TargetRecord]) -> String {
    let mut s = String::from("timestamp,berry_temp\n");
    for r in records {
        s.push_str(&format!("{},{:.3}\n", format_timestamp(r.timestamp), r.berry_temp));
    }
    s
}

/// Training pairs for weather rows that have a target at the same timestamp.
pub fn join_targets(weather: &[WeatherRecord], targets: &[TargetRecord]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let mut j = 0;
    for w in weather {
        while j < targets.len() && targets[j].timestamp < w.timestamp {
            j += 1;
        }
        if j < targets.len() && targets[j].timestamp == w.timestamp {
            x.push(w.features().to_vec());
            y.push(targets[j].berry_temp);
        }
    }
    (x, y)
}

/// A sky frame listed in `frames.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEntry {
    pub path: PathBuf,
    pub timestamp: DateTime<Utc>,
}

pub const FRAMES_MANIFEST: &str = "frames.csv";

/// Reads `<dir>/frames.csv` (`filename,timestamp_utc`); paths resolve against `dir`.
pub fn read_frames(dir: impl AsRef<Path>) -> Result<Ingested<FrameEntry>> {
    let dir = dir.as_ref();
    let path = dir.join(FRAMES_MANIFEST);
    let parsed = rows(&path, &["filename", "timestamp_utc"], |rec| {
        Ok(FrameEntry {
            path: dir.join(rec.get(0).unwrap_or_default()),
            timestamp: parse_timestamp(rec.get(1).unwrap_or_default())?,
        })
    })?;
    let mut warnings = Vec::new();
    let records = order_by_time(&path, parsed, |r| r.timestamp, &mut warnings)?;
    Ok(Ingested { records, warnings })
}

/// A field tile listed in a tile manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct TileEntry {
    pub path: PathBuf,
    pub easting: f64,
    pub northing: f64,
}

/// Reads a `filename,easting_m,northing_m` manifest; paths resolve against its directory.
pub fn read_tiles(path: impl AsRef<Path>) -> Result<Vec<TileEntry>> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new("."));
    Ok(rows(path, &["filename", "easting_m", "northing_m"], |rec| {
        Ok(TileEntry {
            path: dir.join(rec.get(0).unwrap_or_default()),
            easting: field_f64(rec, 1, "easting_m")?,
            northing: field_f64(rec, 2, "northing_m")?,
        })
    })?
    .into_iter()
    .map(|(_, t)| t)
    .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    const HEADER: &str = "timestamp,ambient_temp,wind_speed,gust_speed,wind_dir,rel_humidity,dew_point,rain,wetness,irradiance\n";

    fn row(t: &str, rh: f64) -> String {
        format!("{t},80,3,6,180,{rh},60,0,0,700\n")
    }

    #[test]
    fn well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{HEADER}{}{}{}",
            row("2024-07-01T12:00:00Z", 50.0),
            row("2024-07-01T12:05:00Z", 51.0),
            row("2024-07-01T12:10:00Z", 52.0)
        );
        let got = read_weather(write(dir.path(), "w.csv", &text)).unwrap();
        assert_eq!(got.records.len(), 3);
        assert!(got.warnings.is_empty());
        assert_eq!(got.records[2].rel_humidity, 52.0);
        assert_eq!(weather_to_csv(&got.records).lines().count(), 4);
    }

    #[test]
    fn out_of_range_rows_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{HEADER}{}{}",
            row("2024-07-01T12:00:00Z", 50.0),
            row("2024-07-01T12:05:00Z", 140.0)
        );
        match read_weather(write(dir.path(), "w.csv", &text)) {
            Err(Error::InvalidRows { rows, .. }) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].0, 3);
                assert!(rows[0].1.contains("rel_humidity"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("{HEADER}{}2024-07-01T12:05:00Z,hot,3,6,180,50,60,0,0,700\n", row("2024-07-01T12:00:00Z", 50.0));
        assert!(matches!(
            read_weather(write(dir.path(), "w.csv", &text)),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            read_weather(write(dir.path(), "h.csv", "time,temp\n")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn shuffled_rows_are_sorted_and_duplicates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{HEADER}{}{}",
            row("2024-07-01T12:05:00Z", 51.0),
            row("2024-07-01T12:00:00Z", 50.0)
        );
        let got = read_weather(write(dir.path(), "w.csv", &text)).unwrap();
        assert_eq!(got.records[0].rel_humidity, 50.0);
        assert_eq!(got.warnings.len(), 1);

        let dup = format!(
            "{HEADER}{}{}",
            row("2024-07-01T12:00:00Z", 51.0),
            row("2024-07-01T12:00:00Z", 50.0)
        );
        assert!(matches!(
            read_weather(write(dir.path(), "d.csv", &dup)),
            Err(Error::Ordering { .. })
        ));
    }

    #[test]
    fn targets_join_on_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let w = format!(
            "{HEADER}{}{}",
            row("2024-07-01T12:00:00Z", 50.0),
            row("2024-07-01T12:05:00Z", 51.0)
        );
        let weather = read_weather(write(dir.path(), "w.csv", &w)).unwrap().records;
        let t = "timestamp,berry_temp\n2024-07-01T12:05:00Z,95.5\n2024-07-01T13:00:00Z,90\n";
        let targets = read_targets(write(dir.path(), "t.csv", t)).unwrap().records;
        let (x, y) = join_targets(&weather, &targets);
        assert_eq!(y, vec![95.5]);
        assert_eq!(x[0][5], 51.0);
    }

    #[test]
    fn frame_manifest_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), FRAMES_MANIFEST, "filename,timestamp_utc\nb.png,2024-07-01T12:00:05Z\na.png,2024-07-01T12:00:00Z\n");
        let frames = read_frames(dir.path()).unwrap();
        assert_eq!(frames.records[0].path, dir.path().join("a.png"));
        assert_eq!(frames.warnings.len(), 1);
    }
}
