//! Threshold rule controller, the non-predictive baseline.
//!
//! Discharge whenever the current net load crosses a high percentile of the
//! recent load distribution, charge back up below a low percentile, idle in
//! between. No forecast, no plan — the classic peak-shaving heuristic. For
//! the spot objective the same mechanism runs on the day-ahead price curve
//! instead (prices are published in advance, so that is not foresight).

use serde::{Deserialize, Serialize};

use crate::battery::{step_battery, Action, BatterySpec, BatteryState};
use crate::control::{DayLog, MinuteRecord};
use crate::error::{Error, Result};
use crate::series::{TimeSeries, MARKET_RESOLUTION_MINUTES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleConfig {
    pub discharge_percentile: f64,
    pub charge_percentile: f64,
    pub lookback_days: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            discharge_percentile: 90.0,
            charge_percentile: 30.0,
            lookback_days: 1,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.charge_percentile)
            || !(0.0..=100.0).contains(&self.discharge_percentile)
            || self.charge_percentile >= self.discharge_percentile
        {
            return Err(Error::InvalidConfig(format!(
                "rule percentiles must satisfy 0 <= charge < discharge <= 100, got {} / {}",
                self.charge_percentile, self.discharge_percentile
            )));
        }
        if self.lookback_days == 0 {
            return Err(Error::InvalidConfig("rule lookback must be >= 1 day".into()));
        }
        Ok(())
    }
}

/// Act above `high_kw`, act below `low_kw`, idle in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleThresholds {
    pub high: f64,
    pub low: f64,
}

/// Linear-interpolation percentile of an unsorted sample.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Thresholds from the trailing lookback window of market-resolution load.
pub fn load_thresholds(history_market: &TimeSeries, config: &RuleConfig) -> Result<RuleThresholds> {
    config.validate()?;
    let per_day = history_market.grid.steps_per_day();
    let needed = config.lookback_days * per_day;
    if history_market.len() < needed {
        return Err(Error::InsufficientHistory {
            needed: format!("{} market steps of load history", needed),
            got: format!("{}", history_market.len()),
        });
    }
    let window = &history_market.values[history_market.len() - needed..];
    Ok(RuleThresholds {
        high: percentile(window, config.discharge_percentile),
        low: percentile(window, config.charge_percentile),
    })
}

/// Thresholds from a day-ahead price curve.
pub fn price_thresholds(day_prices: &TimeSeries, config: &RuleConfig) -> Result<RuleThresholds> {
    config.validate()?;
    Ok(RuleThresholds {
        high: percentile(&day_prices.values, config.discharge_percentile),
        low: percentile(&day_prices.values, config.charge_percentile),
    })
}

/// The rule itself: memoryless given the thresholds. Infeasible actions
/// degrade to idle.
pub fn rule_based_step(
    signal_value: f64,
    thresholds: &RuleThresholds,
    state: BatteryState,
    spec: &BatterySpec,
) -> Action {
    let desired = if signal_value > thresholds.high {
        Action::Discharge
    } else if signal_value < thresholds.low {
        Action::Charge
    } else {
        Action::Idle
    };
    if step_battery(state, desired, spec, 1.0 / 60.0).is_ok() {
        desired
    } else {
        Action::Idle
    }
}

/// What the rule watches.
pub enum RuleSignal<'a> {
    /// Current minute net load against load thresholds.
    Load(RuleThresholds),
    /// Current market step price against price thresholds.
    Price {
        thresholds: RuleThresholds,
        day_prices: &'a TimeSeries,
    },
}

/// Runs the rule over one cost period of minute data.
pub fn run_rule_day(
    actual_minutes: &TimeSeries,
    signal: &RuleSignal,
    spec: &BatterySpec,
    initial: BatteryState,
) -> Result<DayLog> {
    if actual_minutes.grid.resolution_minutes != 1 {
        return Err(Error::ResolutionMismatch(
            "rule controller needs one-minute measurements".into(),
        ));
    }
    let minutes_per_step = MARKET_RESOLUTION_MINUTES as usize;
    let mut state = initial;
    let mut records = Vec::with_capacity(actual_minutes.len());
    for (minute, &load) in actual_minutes.values.iter().enumerate() {
        let action = match signal {
            RuleSignal::Load(thresholds) => rule_based_step(load, thresholds, state, spec),
            RuleSignal::Price {
                thresholds,
                day_prices,
            } => {
                let step = minute / minutes_per_step;
                rule_based_step(day_prices.values[step], thresholds, state, spec)
            }
        };
        let (next, grid_delta, applied) =
            crate::battery::step_battery_or_idle(state, action, spec, 1.0 / 60.0);
        records.push(MinuteRecord {
            timestamp: actual_minutes.grid.timestamp(minute),
            action: applied,
            stored_kwh: next.stored_kwh,
            target_kw: f64::NAN,
            realized_kw: load + grid_delta,
            delta_p_kw: f64::NAN,
        });
        state = next;
    }
    let targets = vec![f64::NAN; actual_minutes.len() / minutes_per_step];
    Ok(DayLog {
        minutes: records,
        step_targets_kw: targets,
        final_state: state,
    })
}
