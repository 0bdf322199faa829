//! Closed-loop plan tracking at minute resolution.
//!
//! The day-ahead solution fixes one action per market step; the plan is the
//! forecast plus the scheduled battery power. Every minute the controller
//! compares the running mean of realized net power within the current market
//! step against the plan target and counters the deviation: discharge pulls
//! the mean down toward the target, charge pulls it up. The plan itself is
//! re-optimized from the live battery state as the day unfolds.

use serde::{Deserialize, Serialize};

use crate::battery::{step_battery, step_battery_or_idle, Action, BatterySpec, BatteryState};
use crate::error::{Error, Result};
use crate::forecast::Forecaster;
use crate::optimize::{solve_dp, DispatchProblem, Objective};
use crate::series::{TimeGrid, TimeSeries, MARKET_RESOLUTION_MINUTES};

const MINUTE_HOURS: f64 = 1.0 / 60.0;

/// Target net grid power per market step (forecast plus scheduled battery
/// power).
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionPlan {
    pub target_kw: TimeSeries,
}

/// Builds the consumption plan for an action schedule.
pub fn build_plan(
    forecast: &TimeSeries,
    actions: &[Action],
    spec: &BatterySpec,
) -> Result<ConsumptionPlan> {
    if actions.len() != forecast.len() {
        return Err(Error::LengthMismatch {
            expected: forecast.len(),
            got: actions.len(),
        });
    }
    let values = forecast
        .values
        .iter()
        .zip(actions)
        .map(|(f, a)| f + a.sign() * spec.power_kw)
        .collect();
    Ok(ConsumptionPlan {
        target_kw: TimeSeries::new(forecast.grid, values)?,
    })
}

/// Running-mean tracking error: mean of the realized minutes so far within
/// the current market step, minus the step's plan target.
pub fn tracking_error(realized_minutes_so_far: &[f64], target_kw: f64) -> Result<f64> {
    if realized_minutes_so_far.is_empty() {
        return Err(Error::InvalidConfig(
            "tracking error needs at least one elapsed minute".into(),
        ));
    }
    let mean = realized_minutes_so_far.iter().sum::<f64>() / realized_minutes_so_far.len() as f64;
    Ok(mean - target_kw)
}

/// How often the plan is re-forecast and re-optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplanCadence {
    EveryMinute,
    #[default]
    EveryMarketStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Tolerance in [0, 1]; deviations under `phi * power` are ignored.
    pub tolerance_phi: f64,
    pub replan_cadence: ReplanCadence,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            tolerance_phi: 0.1,
            replan_cadence: ReplanCadence::EveryMarketStep,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tolerance_phi) {
            return Err(Error::InvalidConfig(format!(
                "tolerance phi must be in [0, 1], got {}",
                self.tolerance_phi
            )));
        }
        Ok(())
    }
}

/// Picks the correction for the next minute from the tracking error.
///
/// Within the tolerance band nothing happens; above it the battery counters
/// the sign of the error. A correction the battery cannot deliver for one
/// minute degrades to idle — the grid connection absorbs the miss.
pub fn decide_action(
    delta_p_kw: f64,
    config: &ControllerConfig,
    state: BatteryState,
    spec: &BatterySpec,
) -> Action {
    let threshold = config.tolerance_phi * spec.power_kw;
    let desired = if delta_p_kw.abs() < threshold {
        Action::Idle
    } else if delta_p_kw > 0.0 {
        Action::Discharge
    } else if delta_p_kw < 0.0 {
        Action::Charge
    } else {
        Action::Idle
    };
    if step_battery(state, desired, spec, MINUTE_HOURS).is_ok() {
        desired
    } else {
        Action::Idle
    }
}

/// One cost period of inputs for the control loop.
pub struct DayInputs<'a> {
    /// Realized net consumption for the day, one-minute resolution.
    pub actual_minutes: &'a TimeSeries,
    /// Market-resolution history ending at the day start, for the forecaster.
    pub history: &'a TimeSeries,
    /// Day prices at market resolution; required for the spot objective.
    pub prices: Option<&'a TimeSeries>,
    pub objective: Objective,
    pub spec: &'a BatterySpec,
    pub initial: BatteryState,
}

/// What happened in one minute of the loop.
#[derive(Debug, Clone, Serialize)]
pub struct MinuteRecord {
    pub timestamp: chrono::DateTime<chrono::Utc>,
    /// Action actually applied (after any feasibility degrade).
    pub action: Action,
    /// Stored energy at the end of the minute, kWh.
    pub stored_kwh: f64,
    pub target_kw: f64,
    pub realized_kw: f64,
    /// Tracking error the decision was based on; zero for the first minute
    /// of each market step, which follows the plan directly.
    pub delta_p_kw: f64,
}

/// Full log of one simulated day.
#[derive(Debug, Clone)]
pub struct DayLog {
    pub minutes: Vec<MinuteRecord>,
    /// Plan target in force at each market step when it ran.
    pub step_targets_kw: Vec<f64>,
    pub final_state: BatteryState,
}

impl DayLog {
    pub fn realized_minutes(&self) -> Vec<f64> {
        self.minutes.iter().map(|m| m.realized_kw).collect()
    }

    /// Mean realized net power per market step.
    pub fn realized_step_means(&self) -> Vec<f64> {
        let per_step = MARKET_RESOLUTION_MINUTES as usize;
        self.minutes
            .chunks_exact(per_step)
            .map(|chunk| chunk.iter().map(|m| m.realized_kw).sum::<f64>() / per_step as f64)
            .collect()
    }

    pub fn min_stored_kwh(&self) -> f64 {
        self.minutes
            .iter()
            .map(|m| m.stored_kwh)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_stored_kwh(&self) -> f64 {
        self.minutes
            .iter()
            .map(|m| m.stored_kwh)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs the minute-resolution tracking loop over one cost period.
///
/// Each market step starts by applying the planned action, then corrects
/// every following minute from the running tracking error. At the replan
/// cadence the remaining horizon is re-forecast and re-optimized from the
/// live battery state; for the peak objective the peak already realized
/// today enters as a floor so the optimizer stops spending charge on steps
/// that can no longer matter. A replan that fails (for example the state
/// fell below the planning reserve) keeps the previous plan.
pub fn run_control_loop(
    inputs: &DayInputs,
    forecaster: &dyn Forecaster,
    config: &ControllerConfig,
) -> Result<DayLog> {
    config.validate()?;
    let actual = inputs.actual_minutes;
    if actual.grid.resolution_minutes != 1 {
        return Err(Error::ResolutionMismatch(
            "control loop needs one-minute measurements".into(),
        ));
    }
    if actual.len() != actual.grid.steps_per_day() {
        return Err(Error::InvalidConfig(format!(
            "control loop runs one cost period ({} minutes), got {}",
            actual.grid.steps_per_day(),
            actual.len()
        )));
    }
    let minutes_per_step = MARKET_RESOLUTION_MINUTES as usize;
    let steps = actual.len() / minutes_per_step;
    let day_grid = TimeGrid::new(actual.grid.start, MARKET_RESOLUTION_MINUTES, steps)?;
    if let Some(prices) = inputs.prices {
        if prices.len() != steps || prices.grid.resolution_minutes != MARKET_RESOLUTION_MINUTES {
            return Err(Error::ResolutionMismatch(
                "day prices must cover the cost period at market resolution".into(),
            ));
        }
    }

    // Day-ahead plan; failure here is fatal since there is nothing to fall
    // back to.
    let forecast = forecaster.forecast(inputs.history, &day_grid)?;
    let solution = solve_dp(&plan_problem(inputs, &forecast, inputs.initial, None)?)?;
    let mut actions = solution.actions;
    let mut targets = build_plan(&forecast, &actions, inputs.spec)?.target_kw.values;

    let mut state = inputs.initial;
    let mut realized: Vec<f64> = Vec::with_capacity(actual.len());
    let mut log_minutes = Vec::with_capacity(actual.len());

    for step in 0..steps {
        if step > 0 {
            replan(
                inputs,
                forecaster,
                &day_grid,
                step,
                state,
                &realized,
                &mut actions,
                &mut targets,
            );
        }
        for m in 0..minutes_per_step {
            if m > 0 && config.replan_cadence == ReplanCadence::EveryMinute {
                replan(
                    inputs,
                    forecaster,
                    &day_grid,
                    step,
                    state,
                    &realized,
                    &mut actions,
                    &mut targets,
                );
            }
            let minute = step * minutes_per_step + m;
            let target = targets[step];
            let (desired, delta_p) = if m == 0 {
                (actions[step], 0.0)
            } else {
                let dp = tracking_error(&realized[step * minutes_per_step..minute], target)?;
                (decide_action(dp, config, state, inputs.spec), dp)
            };
            let (next, grid_delta, applied) =
                step_battery_or_idle(state, desired, inputs.spec, MINUTE_HOURS);
            let net = actual.values[minute] + grid_delta;
            realized.push(net);
            log_minutes.push(MinuteRecord {
                timestamp: actual.grid.timestamp(minute),
                action: applied,
                stored_kwh: next.stored_kwh,
                target_kw: target,
                realized_kw: net,
                delta_p_kw: delta_p,
            });
            state = next;
        }
    }

    Ok(DayLog {
        minutes: log_minutes,
        step_targets_kw: targets,
        final_state: state,
    })
}

fn plan_problem(
    inputs: &DayInputs,
    forecast: &TimeSeries,
    state: BatteryState,
    peak_floor: Option<f64>,
) -> Result<DispatchProblem> {
    let offset = inputs
        .prices
        .map(|p| p.grid.index_of(forecast.grid.start))
        .unwrap_or(Some(0));
    let prices = match (inputs.objective, inputs.prices) {
        (Objective::SpotMin, Some(p)) => {
            let offset = offset.ok_or_else(|| {
                Error::ResolutionMismatch("prices do not cover the plan horizon".into())
            })?;
            Some(p.slice(offset, forecast.len())?)
        }
        (Objective::SpotMin, None) => {
            return Err(Error::InvalidConfig(
                "spot objective requires day prices".into(),
            ))
        }
        (Objective::PeakMin, _) => None,
    };
    let problem = DispatchProblem::new(
        forecast.clone(),
        prices,
        *inputs.spec,
        state,
        inputs.objective,
    )?;
    match peak_floor {
        Some(floor) => problem.with_peak_floor(floor),
        None => Ok(problem),
    }
}

/// Re-forecasts and re-optimizes the tail of the day. Any failure leaves the
/// current plan in place.
#[allow(clippy::too_many_arguments)]
fn replan(
    inputs: &DayInputs,
    forecaster: &dyn Forecaster,
    day_grid: &TimeGrid,
    step: usize,
    state: BatteryState,
    realized: &[f64],
    actions: &mut [Action],
    targets: &mut [f64],
) {
    let steps = day_grid.steps;
    let minutes_per_step = MARKET_RESOLUTION_MINUTES as usize;
    let tail = match day_grid.slice(step, steps - step) {
        Ok(g) => g,
        Err(_) => return,
    };
    let Ok(forecast) = forecaster.forecast(inputs.history, &tail) else {
        return;
    };
    let floor = match inputs.objective {
        Objective::PeakMin => {
            let completed = realized.len() / minutes_per_step;
            let mut floor = f64::NEG_INFINITY;
            for s in 0..completed.min(step) {
                let chunk = &realized[s * minutes_per_step..(s + 1) * minutes_per_step];
                let mean = chunk.iter().sum::<f64>() / minutes_per_step as f64;
                floor = floor.max(mean);
            }
            floor.is_finite().then_some(floor)
        }
        Objective::SpotMin => None,
    };
    let Ok(problem) = plan_problem(inputs, &forecast, state, floor) else {
        return;
    };
    let Ok(solution) = solve_dp(&problem) else {
        return;
    };
    let Ok(plan) = build_plan(&forecast, &solution.actions, inputs.spec) else {
        return;
    };
    actions[step..].copy_from_slice(&solution.actions);
    targets[step..].copy_from_slice(&plan.target_kw.values);
}
