//! Uniformly sampled time series and the grids they live on.
//!
//! Power measurements arrive at one-minute resolution; market quantities
//! (plans, prices) live on the 15-minute market grid. A [`TimeGrid`] pins a
//! series to a start instant, a resolution and a step count, and all
//! resampling between the two resolutions goes through [`TimeSeries::resample_mean`].

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes in the cost measurement period (24 h).
pub const COST_PERIOD_MINUTES: i64 = 24 * 60;

/// Default market resolution in minutes.
pub const MARKET_RESOLUTION_MINUTES: i64 = 15;

/// Market steps in one cost period at the default resolution.
pub const MARKET_STEPS_PER_DAY: usize = (COST_PERIOD_MINUTES / MARKET_RESOLUTION_MINUTES) as usize;

/// A uniform sampling grid: start instant, resolution and step count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: DateTime<Utc>,
    /// Step length in whole minutes.
    pub resolution_minutes: i64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(start: DateTime<Utc>, resolution_minutes: i64, steps: usize) -> Result<Self> {
        if resolution_minutes <= 0 {
            return Err(Error::InvalidConfig(format!(
                "grid resolution must be positive, got {resolution_minutes} min"
            )));
        }
        if COST_PERIOD_MINUTES % resolution_minutes != 0 {
            return Err(Error::InvalidConfig(format!(
                "grid resolution {resolution_minutes} min does not divide the 24 h cost period"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidConfig("grid must have at least one step".into()));
        }
        Ok(Self {
            start,
            resolution_minutes,
            steps,
        })
    }

    pub fn resolution(&self) -> Duration {
        Duration::minutes(self.resolution_minutes)
    }

    /// Step length in hours.
    pub fn step_hours(&self) -> f64 {
        self.resolution_minutes as f64 / 60.0
    }

    /// Timestamp of step `i` (the start of its interval).
    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(self.resolution_minutes * i as i64)
    }

    /// First instant after the grid.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.steps)
    }

    /// Index of the step containing `ts`, if on-grid and in range.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let offset = (ts - self.start).num_minutes();
        if offset < 0 || (ts - self.start).num_seconds() % 60 != 0 {
            return None;
        }
        if offset % self.resolution_minutes != 0 {
            return None;
        }
        let idx = (offset / self.resolution_minutes) as usize;
        (idx < self.steps).then_some(idx)
    }

    /// Steps per 24 h cost period.
    pub fn steps_per_day(&self) -> usize {
        (COST_PERIOD_MINUTES / self.resolution_minutes) as usize
    }

    /// Sub-grid of `steps` steps starting at step `offset`.
    pub fn slice(&self, offset: usize, steps: usize) -> Result<TimeGrid> {
        if offset + steps > self.steps {
            return Err(Error::InvalidConfig(format!(
                "slice {offset}..{} exceeds grid of {} steps",
                offset + steps,
                self.steps
            )));
        }
        TimeGrid::new(self.timestamp(offset), self.resolution_minutes, steps)
    }
}

/// Values on a [`TimeGrid`]: kW for power series, currency/kWh for prices.
///
/// Power series are *net* consumption (load minus on-site production) and may
/// go negative when production exceeds load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps {
            return Err(Error::LengthMismatch {
                expected: grid.steps,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite series value {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Sub-series of `steps` steps starting at step `offset`.
    pub fn slice(&self, offset: usize, steps: usize) -> Result<TimeSeries> {
        let grid = self.grid.slice(offset, steps)?;
        Ok(TimeSeries {
            grid,
            values: self.values[offset..offset + steps].to_vec(),
        })
    }

    /// Averages blocks of source steps into one target step each.
    ///
    /// The target resolution must be an integer multiple of the source
    /// resolution and the series length a whole number of blocks, so the
    /// operation preserves total energy exactly (up to float rounding).
    pub fn resample_mean(&self, target_resolution_minutes: i64) -> Result<TimeSeries> {
        let src = self.grid.resolution_minutes;
        if target_resolution_minutes <= 0 || target_resolution_minutes % src != 0 {
            return Err(Error::ResolutionMismatch(format!(
                "target resolution {target_resolution_minutes} min is not a multiple of source {src} min"
            )));
        }
        let factor = (target_resolution_minutes / src) as usize;
        if factor == 1 {
            return Ok(self.clone());
        }
        if self.values.len() % factor != 0 {
            return Err(Error::ResolutionMismatch(format!(
                "series of {} steps is not divisible into {factor}-step blocks",
                self.values.len()
            )));
        }
        let values: Vec<f64> = self
            .values
            .chunks_exact(factor)
            .map(|chunk| chunk.iter().sum::<f64>() / factor as f64)
            .collect();
        let grid = TimeGrid::new(self.grid.start, target_resolution_minutes, values.len())?;
        TimeSeries::new(grid, values)
    }

    /// Splits a multi-day series into consecutive 24 h series.
    pub fn split_days(&self) -> Result<Vec<TimeSeries>> {
        let per_day = self.grid.steps_per_day();
        if self.values.len() % per_day != 0 {
            return Err(Error::ResolutionMismatch(format!(
                "series of {} steps is not a whole number of days ({per_day} steps each)",
                self.values.len()
            )));
        }
        (0..self.values.len() / per_day)
            .map(|d| self.slice(d * per_day, per_day))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn grid_market_steps_per_day() {
        let g = TimeGrid::new(t0(), 15, 96).unwrap();
        assert_eq!(g.steps_per_day(), 96);
        assert_eq!(g.step_hours(), 0.25);
        assert_eq!(MARKET_STEPS_PER_DAY, 96);
    }

    #[test]
    fn grid_rejects_non_dividing_resolution() {
        assert!(TimeGrid::new(t0(), 7, 10).is_err());
        assert!(TimeGrid::new(t0(), 0, 10).is_err());
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = TimeGrid::new(t0(), 15, 96).unwrap();
        for i in [0usize, 1, 42, 95] {
            assert_eq!(g.index_of(g.timestamp(i)), Some(i));
        }
        assert_eq!(g.index_of(g.end()), None);
        assert_eq!(g.index_of(t0() + Duration::minutes(7)), None);
    }

    #[test]
    fn resample_constant_block() {
        let g = TimeGrid::new(t0(), 1, 15).unwrap();
        let s = TimeSeries::new(g, vec![60.0; 15]).unwrap();
        let r = s.resample_mean(15).unwrap();
        assert_eq!(r.values, vec![60.0]);
        assert_eq!(r.grid.resolution_minutes, 15);
    }

    #[test]
    fn resample_arithmetic_mean() {
        let g = TimeGrid::new(t0(), 1, 15).unwrap();
        let s = TimeSeries::new(g, (1..=15).map(f64::from).collect()).unwrap();
        let r = s.resample_mean(15).unwrap();
        assert_eq!(r.values, vec![8.0]);
    }

    #[test]
    fn resample_rejects_non_multiple() {
        let g = TimeGrid::new(t0(), 2, 30).unwrap();
        let s = TimeSeries::new(g, vec![0.0; 30]).unwrap();
        assert!(s.resample_mean(5).is_err());
    }

    #[test]
    fn resample_preserves_energy() {
        let g = TimeGrid::new(t0(), 1, 1440).unwrap();
        let values: Vec<f64> = (0..1440).map(|i| 40.0 + (i as f64 * 0.13).sin() * 25.0).collect();
        let s = TimeSeries::new(g, values).unwrap();
        let r = s.resample_mean(15).unwrap();
        let src_energy = s.mean() * 24.0;
        let dst_energy = r.mean() * 24.0;
        assert!((src_energy - dst_energy).abs() <= 1e-9 * src_energy.abs());
    }

    #[test]
    fn split_days_partitions() {
        let g = TimeGrid::new(t0(), 15, 96 * 3).unwrap();
        let s = TimeSeries::new(g, (0..96 * 3).map(|i| i as f64).collect()).unwrap();
        let days = s.split_days().unwrap();
        assert_eq!(days.len(), 3);
        assert_eq!(days[1].values[0], 96.0);
        assert_eq!(days[2].grid.start, t0() + Duration::days(2));
    }

    #[test]
    fn series_rejects_wrong_length_and_nan() {
        let g = TimeGrid::new(t0(), 15, 4).unwrap();
        assert!(TimeSeries::new(g, vec![1.0; 3]).is_err());
        assert!(TimeSeries::new(g, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}
