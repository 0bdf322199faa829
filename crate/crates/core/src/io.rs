//! CSV ingestion and export.
//!
//! Measurements are minute-resolution rows of `timestamp,net_kw`; spot prices
//! arrive hourly or quarter-hourly as `timestamp,eur_per_mwh` and are
//! forward-filled onto the 15-minute market grid with the unit converted to
//! currency per kWh. Timestamps are RFC 3339 UTC. Values are written with
//! Rust's shortest round-trip float formatting, so a save/load cycle is
//! bit-exact.

use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, Utc};

use crate::error::{Error, Result};
use crate::series::{TimeGrid, TimeSeries, MARKET_RESOLUTION_MINUTES};

/// What to do when a measurement series has missing minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillPolicy {
    /// Report a gap error listing the missing ranges.
    #[default]
    Error,
    /// Hold the last observed value through each gap.
    Hold,
}

struct RawRecord {
    line: u64,
    timestamp: DateTime<Utc>,
    value: f64,
}

fn read_rows(path: &Path, expected_header: [&str; 2]) -> Result<Vec<RawRecord>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    {
        let headers = reader.headers()?;
        if headers.len() != 2 || headers[0] != *expected_header[0] || headers[1] != *expected_header[1]
        {
            return Err(Error::Parse {
                path: display,
                line: 1,
                msg: format!(
                    "expected header `{},{}`, got `{}`",
                    expected_header[0],
                    expected_header[1],
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::Parse {
                path: display.clone(),
                line,
                msg: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let timestamp = DateTime::parse_from_rfc3339(&record[0])
            .map_err(|e| Error::Parse {
                path: display.clone(),
                line,
                msg: format!("bad timestamp {:?}: {e}", &record[0]),
            })?
            .with_timezone(&Utc);
        let value: f64 = record[1].parse().map_err(|e| Error::Parse {
            path: display.clone(),
            line,
            msg: format!("bad value {:?}: {e}", &record[1]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                path: display.clone(),
                line,
                msg: format!("non-finite value {value}"),
            });
        }
        rows.push(RawRecord {
            line,
            timestamp,
            value,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: display,
            line: 1,
            msg: "file has no data rows".into(),
        });
    }
    Ok(rows)
}

fn check_order(path: &Path, rows: &[RawRecord]) -> Result<()> {
    for pair in rows.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if cur.timestamp == prev.timestamp {
            return Err(Error::DuplicateTimestamp {
                path: path.display().to_string(),
                line: cur.line,
                timestamp: rfc3339(cur.timestamp),
            });
        }
        if cur.timestamp < prev.timestamp {
            return Err(Error::NonMonotonicTimestamps {
                path: path.display().to_string(),
                line: cur.line,
                timestamp: rfc3339(cur.timestamp),
            });
        }
    }
    Ok(())
}

/// Loads a minute-resolution net power series (`timestamp,net_kw`).
///
/// Timestamps must be strictly increasing on a one-minute grid. Missing
/// minutes are an error unless `fill` is [`FillPolicy::Hold`]; meters do
/// fail, and silently interpolating over a fault hides it from everything
/// downstream.
pub fn load_power_csv(path: impl AsRef<Path>, fill: FillPolicy) -> Result<TimeSeries> {
    let path = path.as_ref();
    let rows = read_rows(path, ["timestamp", "net_kw"])?;
    check_order(path, &rows)?;

    let minute = Duration::minutes(1);
    let mut gaps: Vec<String> = Vec::new();
    let mut values = Vec::with_capacity(rows.len());
    values.push(rows[0].value);
    for pair in rows.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let span = cur.timestamp - prev.timestamp;
        if span.num_seconds() % 60 != 0 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: cur.line,
                msg: format!("timestamp {} is off the minute grid", rfc3339(cur.timestamp)),
            });
        }
        if span > minute {
            gaps.push(format!(
                "[{}, {})",
                rfc3339(prev.timestamp + minute),
                rfc3339(cur.timestamp)
            ));
            if fill == FillPolicy::Hold {
                for _ in 1..span.num_minutes() {
                    values.push(prev.value);
                }
            }
        }
        values.push(cur.value);
    }
    if !gaps.is_empty() && fill == FillPolicy::Error {
        return Err(Error::Gaps {
            path: path.display().to_string(),
            ranges: gaps.join(", "),
        });
    }
    let grid = TimeGrid::new(rows[0].timestamp, 1, values.len())?;
    TimeSeries::new(grid, values)
}

/// Loads a spot price series (`timestamp,eur_per_mwh`), hourly or
/// quarter-hourly, onto the 15-minute market grid in currency per kWh.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let rows = read_rows(path, ["timestamp", "eur_per_mwh"])?;
    check_order(path, &rows)?;

    let spacing_minutes = if rows.len() == 1 {
        60
    } else {
        (rows[1].timestamp - rows[0].timestamp).num_minutes()
    };
    if spacing_minutes != 60 && spacing_minutes != MARKET_RESOLUTION_MINUTES {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: rows.get(1).map(|r| r.line).unwrap_or(1),
            msg: format!("price spacing must be 60 or 15 minutes, got {spacing_minutes}"),
        });
    }
    for pair in rows.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if (cur.timestamp - prev.timestamp).num_minutes() != spacing_minutes {
            return Err(Error::Gaps {
                path: path.display().to_string(),
                ranges: format!(
                    "irregular spacing at {} (expected {spacing_minutes} min)",
                    rfc3339(cur.timestamp)
                ),
            });
        }
    }
    let fill = (spacing_minutes / MARKET_RESOLUTION_MINUTES) as usize;
    let mut values = Vec::with_capacity(rows.len() * fill);
    for row in &rows {
        let per_kwh = row.value / 1000.0;
        for _ in 0..fill {
            values.push(per_kwh);
        }
    }
    let grid = TimeGrid::new(rows[0].timestamp, MARKET_RESOLUTION_MINUTES, values.len())?;
    TimeSeries::new(grid, values)
}

/// Loads an externally produced forecast (`timestamp,net_kw_forecast`) at
/// market resolution.
pub fn load_forecast_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let rows = read_rows(path, ["timestamp", "net_kw_forecast"])?;
    check_order(path, &rows)?;
    for pair in rows.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if (cur.timestamp - prev.timestamp).num_minutes() != MARKET_RESOLUTION_MINUTES {
            return Err(Error::Gaps {
                path: path.display().to_string(),
                ranges: format!(
                    "irregular spacing at {} (expected {MARKET_RESOLUTION_MINUTES} min)",
                    rfc3339(cur.timestamp)
                ),
            });
        }
    }
    let grid = TimeGrid::new(rows[0].timestamp, MARKET_RESOLUTION_MINUTES, rows.len())?;
    TimeSeries::new(grid, rows.iter().map(|r| r.value).collect())
}

fn write_two_column(path: &Path, header: [&str; 2], series: &TimeSeries, scale: f64) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for (i, value) in series.values.iter().enumerate() {
        writer.write_record([
            rfc3339(series.grid.timestamp(i)),
            format!("{}", value * scale),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a minute-resolution power series as `timestamp,net_kw`.
pub fn save_power_csv(path: impl AsRef<Path>, series: &TimeSeries) -> Result<()> {
    write_two_column(path.as_ref(), ["timestamp", "net_kw"], series, 1.0)
}

/// Writes a market-resolution price series as `timestamp,eur_per_mwh`,
/// converting back from currency per kWh.
pub fn save_price_csv(path: impl AsRef<Path>, series: &TimeSeries) -> Result<()> {
    write_two_column(path.as_ref(), ["timestamp", "eur_per_mwh"], series, 1000.0)
}

fn rfc3339(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use std::io::Write;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn power_csv(rows: &[(i64, f64)]) -> String {
        let mut s = String::from("timestamp,net_kw\n");
        for (minute, value) in rows {
            s.push_str(&format!(
                "{},{}\n",
                rfc3339(t0() + Duration::minutes(*minute)),
                value
            ));
        }
        s
    }

    #[test]
    fn one_day_of_rows_loads_fully() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<(i64, f64)> = (0..1440).map(|m| (m, 40.0 + (m % 60) as f64)).collect();
        let path = write_file(&dir, "load.csv", &power_csv(&rows));
        let series = load_power_csv(&path, FillPolicy::Error).unwrap();
        assert_eq!(series.len(), 1440);
        assert_eq!(series.grid.resolution_minutes, 1);
        assert_eq!(series.grid.start, t0());
    }

    #[test]
    fn duplicate_timestamp_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "dup.csv", &power_csv(&[(0, 1.0), (1, 2.0), (1, 3.0)]));
        match load_power_csv(&path, FillPolicy::Error) {
            Err(Error::DuplicateTimestamp { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn gap_lists_missing_range_and_hold_fills_it() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "gap.csv", &power_csv(&[(0, 1.0), (1, 2.0), (4, 5.0)]));
        match load_power_csv(&path, FillPolicy::Error) {
            Err(Error::Gaps { ranges, .. }) => {
                assert!(ranges.contains("2024-01-01T00:02:00Z"));
            }
            other => panic!("expected gap error, got {other:?}"),
        }
        let filled = load_power_csv(&path, FillPolicy::Hold).unwrap();
        assert_eq!(filled.values, vec![1.0, 2.0, 2.0, 2.0, 5.0]);
    }

    #[test]
    fn non_monotonic_power_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "order.csv", &power_csv(&[(0, 1.0), (2, 2.0), (1, 3.0)]));
        assert!(matches!(
            load_power_csv(&path, FillPolicy::Error),
            Err(Error::NonMonotonicTimestamps { line: 4, .. })
        ));
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "hdr.csv", "time,kw\n2024-01-01T00:00:00Z,1.0\n");
        assert!(matches!(
            load_power_csv(&path, FillPolicy::Error),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn hourly_prices_forward_fill_and_convert() {
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::from("timestamp,eur_per_mwh\n");
        for h in 0..24 {
            content.push_str(&format!("{},50.0\n", rfc3339(t0() + Duration::hours(h))));
        }
        let path = write_file(&dir, "price.csv", &content);
        let series = load_price_csv(&path).unwrap();
        assert_eq!(series.len(), 96);
        assert!(series.values.iter().all(|&v| v == 0.05));
        assert_eq!(series.grid.resolution_minutes, 15);
    }

    #[test]
    fn quarter_hour_prices_pass_through() {
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::from("timestamp,eur_per_mwh\n");
        for q in 0..8 {
            content.push_str(&format!(
                "{},{}\n",
                rfc3339(t0() + Duration::minutes(15 * q)),
                30.0 + q as f64
            ));
        }
        let path = write_file(&dir, "price15.csv", &content);
        let series = load_price_csv(&path).unwrap();
        assert_eq!(series.len(), 8);
        assert_eq!(series.values[3], 0.033);
    }

    #[test]
    fn non_monotonic_prices_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let content = format!(
            "timestamp,eur_per_mwh\n{},10\n{},11\n{},12\n",
            rfc3339(t0() + Duration::hours(1)),
            rfc3339(t0()),
            rfc3339(t0() + Duration::hours(2)),
        );
        let path = write_file(&dir, "bad.csv", &content);
        assert!(matches!(
            load_price_csv(&path),
            Err(Error::NonMonotonicTimestamps { .. })
        ));
    }

    #[test]
    fn power_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TimeGrid::new(t0(), 1, 300).unwrap();
        let values: Vec<f64> = (0..300)
            .map(|i| 40.0 + 60.0 * ((i as f64) * 0.7183).sin() / 3.0_f64.sqrt())
            .collect();
        let series = TimeSeries::new(grid, values).unwrap();
        let path = dir.path().join("rt.csv");
        save_power_csv(&path, &series).unwrap();
        let loaded = load_power_csv(&path, FillPolicy::Error).unwrap();
        assert_eq!(series, loaded);
    }
}
