//! Day-ahead net-consumption forecasters.
//!
//! The controller only needs a horizon of market-resolution values; where
//! they come from is pluggable. Besides the perfect oracle (actuals fed
//! back, the upper bound for any learned model) there are two calendar
//! baselines and a loader for forecasts produced by an external model.

use chrono::Duration;

use crate::error::{Error, Result};
use crate::io;
use crate::series::{TimeGrid, TimeSeries};

pub trait Forecaster: Send + Sync {
    fn name(&self) -> &str;

    /// Produces one value per step of `horizon`. `history` is the
    /// market-resolution past ending at (or before) the horizon start.
    fn forecast(&self, history: &TimeSeries, horizon: &TimeGrid) -> Result<TimeSeries>;
}

/// Feeds the realized consumption back as the forecast.
pub struct PerfectOracle {
    actuals: TimeSeries,
}

impl PerfectOracle {
    /// `actuals` must be at market resolution and cover every horizon this
    /// oracle will be asked for.
    pub fn new(actuals: TimeSeries) -> Self {
        Self { actuals }
    }
}

impl Forecaster for PerfectOracle {
    fn name(&self) -> &str {
        "perfect"
    }

    fn forecast(&self, _history: &TimeSeries, horizon: &TimeGrid) -> Result<TimeSeries> {
        lookup_window(&self.actuals, horizon, "oracle actuals")
    }
}

/// Repeats the most recent fully observed day.
pub struct Persistence;

/// Repeats the same weekday one week back.
pub struct SeasonalNaive;

impl Forecaster for Persistence {
    fn name(&self) -> &str {
        "persistence"
    }

    fn forecast(&self, history: &TimeSeries, horizon: &TimeGrid) -> Result<TimeSeries> {
        lagged_lookup(history, horizon, Duration::days(1))
    }
}

impl Forecaster for SeasonalNaive {
    fn name(&self) -> &str {
        "seasonal-naive"
    }

    fn forecast(&self, history: &TimeSeries, horizon: &TimeGrid) -> Result<TimeSeries> {
        lagged_lookup(history, horizon, Duration::days(7))
    }
}

/// Precomputed forecasts loaded from `timestamp,net_kw_forecast` CSV.
pub struct ExternalFile {
    name: String,
    series: TimeSeries,
}

impl ExternalFile {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let name = format!("external:{}", path.as_ref().display());
        let series = io::load_forecast_csv(path)?;
        Ok(Self { name, series })
    }

    pub fn from_series(series: TimeSeries) -> Self {
        Self {
            name: "external".into(),
            series,
        }
    }
}

impl Forecaster for ExternalFile {
    fn name(&self) -> &str {
        &self.name
    }

    fn forecast(&self, _history: &TimeSeries, horizon: &TimeGrid) -> Result<TimeSeries> {
        lookup_window(&self.series, horizon, "external forecast file")
    }
}

/// Slices `source` at the horizon window, verifying grid alignment.
fn lookup_window(source: &TimeSeries, horizon: &TimeGrid, what: &str) -> Result<TimeSeries> {
    if source.grid.resolution_minutes != horizon.resolution_minutes {
        return Err(Error::ResolutionMismatch(format!(
            "{what} is at {} min resolution, horizon wants {} min",
            source.grid.resolution_minutes, horizon.resolution_minutes
        )));
    }
    let offset = source.grid.index_of(horizon.start).ok_or_else(|| {
        Error::InsufficientHistory {
            needed: format!("{what} covering {}", horizon.start),
            got: format!(
                "{} .. {}",
                source.grid.start,
                source.grid.end()
            ),
        }
    })?;
    if offset + horizon.steps > source.grid.steps {
        return Err(Error::InsufficientHistory {
            needed: format!("{what} covering {} steps from {}", horizon.steps, horizon.start),
            got: format!("{} steps", source.grid.steps - offset),
        });
    }
    source.slice(offset, horizon.steps)
}

/// For each horizon step, takes the history value one `lag` back, stepping
/// further back in whole lags until it lands inside the history.
fn lagged_lookup(history: &TimeSeries, horizon: &TimeGrid, lag: Duration) -> Result<TimeSeries> {
    if history.grid.resolution_minutes != horizon.resolution_minutes {
        return Err(Error::ResolutionMismatch(format!(
            "history is at {} min resolution, horizon wants {} min",
            history.grid.resolution_minutes, horizon.resolution_minutes
        )));
    }
    let needed = format!("{} of history before {}", human_lag(lag), horizon.start);
    let mut values = Vec::with_capacity(horizon.steps);
    for i in 0..horizon.steps {
        let mut ts = horizon.timestamp(i) - lag;
        while ts >= history.grid.end() {
            ts -= lag;
        }
        let idx = history.grid.index_of(ts).ok_or_else(|| Error::InsufficientHistory {
            needed: needed.clone(),
            got: format!("{} .. {}", history.grid.start, history.grid.end()),
        })?;
        values.push(history.values[idx]);
    }
    TimeSeries::new(*horizon, values)
}

fn human_lag(lag: Duration) -> String {
    format!("{} day(s)", lag.num_days())
}

/// Per-day forecast accuracy on a corpus of market-resolution actuals.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ForecastErrorRow {
    pub day_start: chrono::DateTime<chrono::Utc>,
    pub mae_kw: f64,
    pub mape_pct: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ForecastErrorReport {
    pub forecaster: String,
    pub days: Vec<ForecastErrorRow>,
    pub mean_mae_kw: f64,
    pub mean_mape_pct: f64,
}

/// Scores day-ahead forecasts for every day after the warm-up window.
///
/// MAPE skips steps whose actual magnitude is below 1e-6 kW; net series can
/// cross zero under PV and a relative error is meaningless there.
pub fn forecast_error_report(
    forecaster: &dyn Forecaster,
    actuals_market: &TimeSeries,
    warmup_days: usize,
) -> Result<ForecastErrorReport> {
    let per_day = actuals_market.grid.steps_per_day();
    let days = actuals_market.split_days()?;
    if warmup_days >= days.len() {
        return Err(Error::InsufficientHistory {
            needed: format!("more than {warmup_days} warm-up days"),
            got: format!("{} days", days.len()),
        });
    }
    let mut rows = Vec::new();
    for (d, day) in days.iter().enumerate().skip(warmup_days) {
        let history = actuals_market.slice(0, d * per_day)?;
        let predicted = forecaster.forecast(&history, &day.grid)?;
        let mut abs_sum = 0.0;
        let mut rel_sum = 0.0;
        let mut rel_n = 0usize;
        for (p, a) in predicted.values.iter().zip(&day.values) {
            let err = (p - a).abs();
            abs_sum += err;
            if a.abs() > 1e-6 {
                rel_sum += err / a.abs();
                rel_n += 1;
            }
        }
        rows.push(ForecastErrorRow {
            day_start: day.grid.start,
            mae_kw: abs_sum / per_day as f64,
            mape_pct: if rel_n > 0 {
                100.0 * rel_sum / rel_n as f64
            } else {
                0.0
            },
        });
    }
    let n = rows.len() as f64;
    Ok(ForecastErrorReport {
        forecaster: forecaster.name().to_string(),
        mean_mae_kw: rows.iter().map(|r| r.mae_kw).sum::<f64>() / n,
        mean_mape_pct: rows.iter().map(|r| r.mape_pct).sum::<f64>() / n,
        days: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::MARKET_RESOLUTION_MINUTES;
    use chrono::{DateTime, TimeZone, Utc};

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn market_days(day_values: &[Vec<f64>]) -> TimeSeries {
        let values: Vec<f64> = day_values.concat();
        let grid = TimeGrid::new(t0(), MARKET_RESOLUTION_MINUTES, values.len()).unwrap();
        TimeSeries::new(grid, values).unwrap()
    }

    fn day_grid(day: i64) -> TimeGrid {
        TimeGrid::new(t0() + Duration::days(day), MARKET_RESOLUTION_MINUTES, 96).unwrap()
    }

    #[test]
    fn persistence_repeats_constant_day() {
        let history = market_days(&[vec![60.0; 96]]);
        let forecast = Persistence.forecast(&history, &day_grid(1)).unwrap();
        assert_eq!(forecast.values, vec![60.0; 96]);
    }

    #[test]
    fn persistence_uses_latest_day() {
        let history = market_days(&[vec![30.0; 96], vec![70.0; 96]]);
        let forecast = Persistence.forecast(&history, &day_grid(2)).unwrap();
        assert_eq!(forecast.values, vec![70.0; 96]);
    }

    #[test]
    fn persistence_needs_a_full_day() {
        let grid = TimeGrid::new(t0(), MARKET_RESOLUTION_MINUTES, 10).unwrap();
        let history = TimeSeries::new(grid, vec![1.0; 10]).unwrap();
        assert!(matches!(
            Persistence.forecast(&history, &day_grid(1)),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn persistence_covers_midday_replan_horizons() {
        let history = market_days(&[(0..96).map(f64::from).collect()]);
        let tail = day_grid(1).slice(40, 56).unwrap();
        let forecast = Persistence.forecast(&history, &tail).unwrap();
        assert_eq!(forecast.values[0], 40.0);
        assert_eq!(forecast.len(), 56);
    }

    #[test]
    fn seasonal_naive_looks_one_week_back() {
        let days: Vec<Vec<f64>> = (0..7).map(|d| vec![d as f64; 96]).collect();
        let history = market_days(&days);
        let forecast = SeasonalNaive.forecast(&history, &day_grid(7)).unwrap();
        assert_eq!(forecast.values, vec![0.0; 96]);
        let forecast = SeasonalNaive.forecast(&history, &day_grid(9)).unwrap();
        assert_eq!(forecast.values, vec![2.0; 96]);
    }

    #[test]
    fn seasonal_naive_needs_seven_days() {
        let days: Vec<Vec<f64>> = (0..6).map(|d| vec![d as f64; 96]).collect();
        let history = market_days(&days);
        assert!(matches!(
            SeasonalNaive.forecast(&history, &day_grid(6)),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn oracle_returns_actuals_exactly() {
        let actuals = market_days(&[vec![10.0; 96], (0..96).map(f64::from).collect()]);
        let oracle = PerfectOracle::new(actuals.clone());
        let history = actuals.slice(0, 96).unwrap();
        let forecast = oracle.forecast(&history, &day_grid(1)).unwrap();
        assert_eq!(forecast.values, &actuals.values[96..]);
    }

    #[test]
    fn oracle_error_report_is_all_zero() {
        let actuals = market_days(&[vec![10.0; 96], vec![20.0; 96], vec![30.0; 96]]);
        let oracle = PerfectOracle::new(actuals.clone());
        let report = forecast_error_report(&oracle, &actuals, 1).unwrap();
        assert_eq!(report.days.len(), 2);
        assert!(report.days.iter().all(|r| r.mae_kw == 0.0 && r.mape_pct == 0.0));
    }

    #[test]
    fn constant_bias_has_exact_mae() {
        struct Biased(PerfectOracle);
        impl Forecaster for Biased {
            fn name(&self) -> &str {
                "biased"
            }
            fn forecast(&self, history: &TimeSeries, horizon: &TimeGrid) -> Result<TimeSeries> {
                let mut f = self.0.forecast(history, horizon)?;
                for v in &mut f.values {
                    *v += 5.0;
                }
                Ok(f)
            }
        }
        let actuals = market_days(&[vec![50.0; 96], vec![60.0; 96]]);
        let report =
            forecast_error_report(&Biased(PerfectOracle::new(actuals.clone())), &actuals, 1)
                .unwrap();
        assert_eq!(report.mean_mae_kw, 5.0);
        assert!((report.days[0].mape_pct - 100.0 * 5.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn external_file_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forecast.csv");
        let series = market_days(&[(0..96).map(|i| 40.0 + i as f64).collect()]);
        let mut writer = csv::Writer::from_path(&path).unwrap();
        writer.write_record(["timestamp", "net_kw_forecast"]).unwrap();
        for (i, v) in series.values.iter().enumerate() {
            writer
                .write_record([
                    series
                        .grid
                        .timestamp(i)
                        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                    format!("{v}"),
                ])
                .unwrap();
        }
        writer.flush().unwrap();
        drop(writer);

        let external = ExternalFile::load(&path).unwrap();
        let got = external.forecast(&series, &day_grid(0)).unwrap();
        assert_eq!(got.values, series.values);
        // asking outside the file is an error
        assert!(external.forecast(&series, &day_grid(1)).is_err());
    }

    #[test]
    fn weekend_pattern_favors_seasonal_naive() {
        // Two weeks with weekends at a lower plateau: persistence drags
        // Friday into Saturday, seasonal-naive does not.
        let mut days = Vec::new();
        for week in 0..2 {
            for dow in 0..7 {
                let level = match dow {
                    5 => 55.0,
                    6 => 45.0,
                    _ => 80.0,
                };
                days.push(vec![level + week as f64; 96]);
            }
        }
        let corpus = market_days(&days);
        let persistence = forecast_error_report(&Persistence, &corpus, 7).unwrap();
        let seasonal = forecast_error_report(&SeasonalNaive, &corpus, 7).unwrap();
        // Saturday (index 5 of the scored week) and Sunday (6).
        for weekend in [5usize, 6] {
            assert!(
                seasonal.days[weekend].mape_pct < persistence.days[weekend].mape_pct,
                "seasonal should beat persistence on weekend day {weekend}"
            );
        }
    }
}
