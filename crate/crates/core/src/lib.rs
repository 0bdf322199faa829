//! Battery dispatch scheduling for buildings: day-ahead optimization of peak
//! load or spot cost, plan tracking at minute resolution, and a replay
//! simulator for comparing control strategies on measured or synthetic data.

pub mod battery;
pub mod control;
pub mod io;
pub mod error;
pub mod forecast;
pub mod optimize;
pub mod rule;
pub mod series;
pub mod synth;

pub use battery::{step_battery, step_battery_or_idle, Action, BatterySpec, BatteryState};
pub use error::{Error, Result};
pub use optimize::{
    evaluate_peak, evaluate_spot, solve_brute_force, solve_dp, DispatchProblem, DispatchSolution,
    Objective,
};
pub use series::{TimeGrid, TimeSeries, MARKET_RESOLUTION_MINUTES, MARKET_STEPS_PER_DAY};
