//! Day-ahead dispatch optimization.
//!
//! Chooses one battery action per market step over the horizon, minimizing
//! either the peak of per-step net power or the energy-weighted spot cost,
//! subject to the battery staying within `[reserve, capacity]` at every step.
//!
//! [`solve_dp`] is an exact dynamic program over the reachable stored-energy
//! lattice; [`solve_brute_force`] enumerates every feasible action sequence
//! and exists to cross-check the DP. Both walk the same transition function
//! and evaluate objectives with the same floating-point operation order, so
//! their results agree bit for bit, not just within a tolerance.

use serde::{Deserialize, Serialize};

use crate::battery::{Action, BatterySpec, BatteryState};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Action candidates in tie-break preference order: fewer battery moves and
/// more retained charge beat an equal-valued alternative.
const PREFERENCE: [Action; 3] = [Action::Idle, Action::Discharge, Action::Charge];

/// Brute-force horizon cap (3^T sequences).
pub const BRUTE_FORCE_MAX_STEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[serde(rename = "peak")]
    PeakMin,
    #[serde(rename = "spot")]
    SpotMin,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::PeakMin => write!(f, "peak"),
            Objective::SpotMin => write!(f, "spot"),
        }
    }
}

/// One day-ahead (or remaining-horizon) dispatch instance.
#[derive(Debug, Clone)]
pub struct DispatchProblem {
    /// Forecast net consumption at market resolution, kW.
    pub forecast: TimeSeries,
    /// Spot prices per kWh; present exactly when the objective is spot cost.
    pub prices: Option<TimeSeries>,
    pub spec: BatterySpec,
    pub initial: BatteryState,
    pub objective: Objective,
    /// Peak already realized earlier in the cost period. Net powers below
    /// the floor cannot improve the day's peak, so mid-day re-optimizations
    /// stop spending charge on them.
    pub peak_floor: Option<f64>,
}

impl DispatchProblem {
    pub fn new(
        forecast: TimeSeries,
        prices: Option<TimeSeries>,
        spec: BatterySpec,
        initial: BatteryState,
        objective: Objective,
    ) -> Result<Self> {
        spec.validate()?;
        match objective {
            Objective::SpotMin => {
                let p = prices.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("spot objective requires a price series".into())
                })?;
                if p.len() != forecast.len() {
                    return Err(Error::LengthMismatch {
                        expected: forecast.len(),
                        got: p.len(),
                    });
                }
                if p.grid.resolution_minutes != forecast.grid.resolution_minutes {
                    return Err(Error::ResolutionMismatch(
                        "price and forecast series must share the market resolution".into(),
                    ));
                }
            }
            Objective::PeakMin => {
                if prices.is_some() {
                    return Err(Error::InvalidConfig(
                        "peak objective does not take a price series".into(),
                    ));
                }
            }
        }
        let step_e = spec.step_energy_kwh(forecast.grid.step_hours());
        if step_e > spec.capacity_kwh {
            return Err(Error::InvalidConfig(format!(
                "one {} min step moves {step_e} kWh, more than the {} kWh capacity",
                forecast.grid.resolution_minutes, spec.capacity_kwh
            )));
        }
        Ok(Self {
            forecast,
            prices,
            spec,
            initial,
            objective,
            peak_floor: None,
        })
    }

    pub fn with_peak_floor(mut self, floor_kw: f64) -> Result<Self> {
        if self.objective != Objective::PeakMin {
            return Err(Error::InvalidConfig(
                "peak floor only applies to the peak objective".into(),
            ));
        }
        if !floor_kw.is_finite() {
            return Err(Error::InvalidConfig("peak floor must be finite".into()));
        }
        self.peak_floor = Some(floor_kw);
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.forecast.len()
    }
}

/// An optimal action sequence with its objective and stored-energy path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub actions: Vec<Action>,
    /// kW for the peak objective, currency for the spot objective.
    pub objective_value: f64,
    /// Stored energy before step 0, after step 0, ..., after the last step.
    pub state_trajectory: Vec<BatteryState>,
}

/// Peak of per-step net power for a candidate sequence, in kW.
pub fn evaluate_peak(forecast: &TimeSeries, actions: &[Action], spec: &BatterySpec) -> Result<f64> {
    if actions.len() != forecast.len() {
        return Err(Error::LengthMismatch {
            expected: forecast.len(),
            got: actions.len(),
        });
    }
    Ok(peak_from(&forecast.values, actions, spec.power_kw, f64::NEG_INFINITY))
}

/// Energy-weighted spot cost of a candidate sequence.
pub fn evaluate_spot(
    forecast: &TimeSeries,
    prices: &TimeSeries,
    actions: &[Action],
    spec: &BatterySpec,
    dt_hours: f64,
) -> Result<f64> {
    if actions.len() != forecast.len() {
        return Err(Error::LengthMismatch {
            expected: forecast.len(),
            got: actions.len(),
        });
    }
    if prices.len() != forecast.len() {
        return Err(Error::LengthMismatch {
            expected: forecast.len(),
            got: prices.len(),
        });
    }
    Ok(spot_from(
        &forecast.values,
        &prices.values,
        actions,
        spec.power_kw,
        dt_hours,
    ))
}

/// Exact solver: backward induction over the reachable stored-energy states.
///
/// States are tracked as (charge count, discharge count) so the stored level
/// is always the closed form `s1 + (a·η − d)·e`, never a running float sum;
/// with η = 1 opposite actions cancel and the lattice collapses to the net
/// count. Peak minimization runs a min-max recursion, then a second additive
/// pass picks, among peak-optimal policies, one moving the battery least.
pub fn solve_dp(problem: &DispatchProblem) -> Result<DispatchSolution> {
    let ctx = SolveContext::new(problem)?;
    let space = ctx.space;

    match ctx.objective {
        Objective::SpotMin => {
            let cost = |k: usize, action: Action, to_go: f64| ctx.step_cost(k, action) + to_go;
            let values = backward_layers_with_terminal(&ctx, 0.0, cost);
            let actions = reconstruct(&ctx, &values, cost)?;
            finish(&ctx, actions, values[0][space.index(0, 0, 0)])
        }
        Objective::PeakMin => {
            let peak = |k: usize, action: Action, to_go: f64| ctx.step_power(k, action).max(to_go);
            let values = backward_layers_with_terminal(&ctx, ctx.terminal_peak(), peak);
            let pstar = values[0][space.index(0, 0, 0)];
            if pstar.is_infinite() {
                return Err(Error::Infeasible("no feasible action sequence".into()));
            }
            // Second pass: among peak-optimal policies, minimize the number
            // of battery moves. An action stays on an optimal path iff its
            // own step power and its successor's peak-to-go are within pstar.
            let moves = |_k: usize, action: Action, to_go: f64| {
                if action.is_idle() {
                    to_go
                } else {
                    1.0 + to_go
                }
            };
            let allowed = |k: usize, action: Action, a2: u32, d2: u32| {
                ctx.step_power(k, action) <= pstar
                    && values[k + 1][space.index(k + 1, a2, d2)] <= pstar
            };
            let secondary = backward_layers_filtered(&ctx, 0.0, moves, allowed);
            let actions = reconstruct_filtered(&ctx, &secondary, moves, allowed)?;
            finish(&ctx, actions, pstar)
        }
    }
}

struct SolveContext<'a> {
    forecast: &'a [f64],
    prices: Option<&'a [f64]>,
    power: f64,
    eta: f64,
    step_e: f64,
    s1: f64,
    capacity: f64,
    reserve: f64,
    dt_hours: f64,
    objective: Objective,
    floor: Option<f64>,
    space: StateSpace,
}

impl<'a> SolveContext<'a> {
    fn new(problem: &'a DispatchProblem) -> Result<Self> {
        let spec = &problem.spec;
        let s1 = problem.initial.stored_kwh;
        if !(0.0..=spec.capacity_kwh).contains(&s1) {
            return Err(Error::Infeasible(format!(
                "initial stored energy {s1} kWh outside [0, {}] kWh",
                spec.capacity_kwh
            )));
        }
        if s1 < spec.reserve_kwh {
            return Err(Error::Infeasible(format!(
                "initial stored energy {s1} kWh below the {} kWh reserve",
                spec.reserve_kwh
            )));
        }
        let dt_hours = problem.forecast.grid.step_hours();
        Ok(Self {
            forecast: &problem.forecast.values,
            prices: problem.prices.as_ref().map(|p| p.values.as_slice()),
            power: spec.power_kw,
            eta: spec.efficiency,
            step_e: spec.step_energy_kwh(dt_hours),
            s1,
            capacity: spec.capacity_kwh,
            reserve: spec.reserve_kwh,
            dt_hours,
            objective: problem.objective,
            floor: problem.peak_floor,
            space: if spec.efficiency == 1.0 {
                StateSpace::Net
            } else {
                StateSpace::Counts
            },
        })
    }

    /// Stored energy after `a` charges and `d` discharges, closed form.
    fn stored(&self, a: u32, d: u32) -> f64 {
        self.s1 + (a as f64 * self.eta - d as f64) * self.step_e
    }

    /// Net grid power at step `k` under `action`, kW.
    fn step_power(&self, k: usize, action: Action) -> f64 {
        self.forecast[k] + action.sign() * self.power
    }

    /// Energy cost of step `k` under `action`.
    fn step_cost(&self, k: usize, action: Action) -> f64 {
        self.step_power(k, action) * self.prices.expect("spot objective has prices")[k] * self.dt_hours
    }

    fn terminal_peak(&self) -> f64 {
        self.floor.unwrap_or(f64::NEG_INFINITY)
    }

    /// Applies `action` to state counts, returning the canonical successor
    /// if the stored level stays within `[reserve, capacity]`.
    fn transition(&self, a: u32, d: u32, action: Action) -> Option<(u32, u32)> {
        let (a2, d2) = match action {
            Action::Idle => return Some((a, d)),
            Action::Charge => self.space.canon(a + 1, d),
            Action::Discharge => self.space.canon(a, d + 1),
        };
        let stored = self.stored(a2, d2);
        match action {
            Action::Charge => (stored <= self.capacity).then_some((a2, d2)),
            Action::Discharge => (stored >= self.reserve).then_some((a2, d2)),
            Action::Idle => unreachable!(),
        }
    }

    fn state_valid(&self, a: u32, d: u32) -> bool {
        let s = self.stored(a, d);
        s >= self.reserve && s <= self.capacity
    }
}

/// State-count indexing. With unit efficiency a charge and a discharge cancel
/// exactly, so only the net count matters; otherwise every (charges,
/// discharges) pair is a distinct stored level.
#[derive(Clone, Copy, PartialEq)]
enum StateSpace {
    Net,
    Counts,
}

impl StateSpace {
    fn canon(self, a: u32, d: u32) -> (u32, u32) {
        match self {
            StateSpace::Net => {
                let m = a.min(d);
                (a - m, d - m)
            }
            StateSpace::Counts => (a, d),
        }
    }

    fn layer_len(self, k: usize) -> usize {
        match self {
            StateSpace::Net => 2 * k + 1,
            StateSpace::Counts => (k + 1) * (k + 2) / 2,
        }
    }

    fn index(self, k: usize, a: u32, d: u32) -> usize {
        match self {
            StateSpace::Net => (k as isize + a as isize - d as isize) as usize,
            StateSpace::Counts => {
                let s = (a + d) as usize;
                s * (s + 1) / 2 + d as usize
            }
        }
    }

    fn for_each_state(self, k: usize, mut f: impl FnMut(u32, u32)) {
        match self {
            StateSpace::Net => {
                for d in (1..=k as u32).rev() {
                    f(0, d);
                }
                for a in 0..=k as u32 {
                    f(a, 0);
                }
            }
            StateSpace::Counts => {
                for s in 0..=k as u32 {
                    for d in 0..=s {
                        f(s - d, d);
                    }
                }
            }
        }
    }
}

/// Backward induction with terminal value `terminal`; `combine` folds one
/// step's contribution into the value-to-go, `allowed` additionally filters
/// candidate transitions (beyond battery feasibility).
fn backward_layers_filtered(
    ctx: &SolveContext,
    terminal: f64,
    combine: impl Fn(usize, Action, f64) -> f64,
    allowed: impl Fn(usize, Action, u32, u32) -> bool,
) -> Vec<Vec<f64>> {
    let horizon = ctx.forecast.len();
    let space = ctx.space;
    let mut layers: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
    layers.resize_with(horizon + 1, Vec::new);
    layers[horizon] = vec![terminal; space.layer_len(horizon)];
    for k in (0..horizon).rev() {
        let mut layer = vec![f64::INFINITY; space.layer_len(k)];
        let next = &layers[k + 1];
        space.for_each_state(k, |a, d| {
            if !ctx.state_valid(a, d) {
                return;
            }
            let mut best = f64::INFINITY;
            for action in PREFERENCE {
                if let Some((a2, d2)) = ctx.transition(a, d, action) {
                    if !allowed(k, action, a2, d2) {
                        continue;
                    }
                    let value = combine(k, action, next[space.index(k + 1, a2, d2)]);
                    if value < best {
                        best = value;
                    }
                }
            }
            layer[space.index(k, a, d)] = best;
        });
        layers[k] = layer;
    }
    layers
}

fn backward_layers_with_terminal(
    ctx: &SolveContext,
    terminal: f64,
    combine: impl Fn(usize, Action, f64) -> f64,
) -> Vec<Vec<f64>> {
    backward_layers_filtered(ctx, terminal, combine, |_, _, _, _| true)
}

/// Walks forward picking, at each step, the first action in preference order
/// whose value matches the layer optimum. Values were computed from exactly
/// these candidates, so a match always exists.
fn reconstruct_filtered(
    ctx: &SolveContext,
    values: &[Vec<f64>],
    combine: impl Fn(usize, Action, f64) -> f64,
    allowed: impl Fn(usize, Action, u32, u32) -> bool,
) -> Result<Vec<Action>> {
    let horizon = ctx.forecast.len();
    let space = ctx.space;
    let mut actions = Vec::with_capacity(horizon);
    let (mut a, mut d) = (0u32, 0u32);
    for k in 0..horizon {
        let here = values[k][space.index(k, a, d)];
        let mut chosen = None;
        for action in PREFERENCE {
            if let Some((a2, d2)) = ctx.transition(a, d, action) {
                if !allowed(k, action, a2, d2) {
                    continue;
                }
                let value = combine(k, action, values[k + 1][space.index(k + 1, a2, d2)]);
                if value == here {
                    chosen = Some((action, a2, d2));
                    break;
                }
            }
        }
        let (action, a2, d2) = chosen.ok_or_else(|| {
            Error::Infeasible(format!("no optimal action reachable at step {k}"))
        })?;
        actions.push(action);
        a = a2;
        d = d2;
    }
    Ok(actions)
}

fn reconstruct(
    ctx: &SolveContext,
    values: &[Vec<f64>],
    combine: impl Fn(usize, Action, f64) -> f64,
) -> Result<Vec<Action>> {
    reconstruct_filtered(ctx, values, combine, |_, _, _, _| true)
}

fn finish(ctx: &SolveContext, actions: Vec<Action>, objective_value: f64) -> Result<DispatchSolution> {
    let trajectory = trajectory(ctx, &actions)?;
    Ok(DispatchSolution {
        actions,
        objective_value,
        state_trajectory: trajectory,
    })
}

fn trajectory(ctx: &SolveContext, actions: &[Action]) -> Result<Vec<BatteryState>> {
    let mut states = Vec::with_capacity(actions.len() + 1);
    let (mut a, mut d) = (0u32, 0u32);
    states.push(BatteryState::new(ctx.stored(a, d)));
    for (k, action) in actions.iter().enumerate() {
        let (a2, d2) = ctx.transition(a, d, *action).ok_or_else(|| {
            Error::Infeasible(format!("action {action} infeasible at step {k}"))
        })?;
        a = a2;
        d = d2;
        states.push(BatteryState::new(ctx.stored(a, d)));
    }
    Ok(states)
}

fn peak_from(forecast: &[f64], actions: &[Action], power: f64, terminal: f64) -> f64 {
    let mut v = terminal;
    for k in (0..forecast.len()).rev() {
        v = (forecast[k] + actions[k].sign() * power).max(v);
    }
    v
}

fn spot_from(forecast: &[f64], prices: &[f64], actions: &[Action], power: f64, dt_hours: f64) -> f64 {
    let mut v = 0.0;
    for k in (0..forecast.len()).rev() {
        v = (forecast[k] + actions[k].sign() * power) * prices[k] * dt_hours + v;
    }
    v
}

/// Verification oracle: enumerates every feasible action sequence.
///
/// Shares the DP's transition function and objective evaluation, and breaks
/// ties the same way (fewest battery moves, then earliest preference-order
/// sequence), so on any instance within the horizon cap it returns the same
/// solution as [`solve_dp`] exactly.
pub fn solve_brute_force(problem: &DispatchProblem) -> Result<DispatchSolution> {
    let horizon = problem.horizon();
    if horizon > BRUTE_FORCE_MAX_STEPS {
        return Err(Error::HorizonTooLarge {
            steps: horizon,
            max: BRUTE_FORCE_MAX_STEPS,
        });
    }
    let ctx = SolveContext::new(problem)?;
    let mut best: Option<(f64, f64, Vec<Action>)> = None;
    let mut prefix = Vec::with_capacity(horizon);
    enumerate(&ctx, 0, 0, 0, &mut prefix, &mut best);
    let (primary, _, actions) =
        best.ok_or_else(|| Error::Infeasible("no feasible action sequence".into()))?;
    finish(&ctx, actions, primary)
}

fn enumerate(
    ctx: &SolveContext,
    k: usize,
    a: u32,
    d: u32,
    prefix: &mut Vec<Action>,
    best: &mut Option<(f64, f64, Vec<Action>)>,
) {
    if k == ctx.forecast.len() {
        let (primary, secondary) = score(ctx, prefix);
        let improves = match best {
            None => true,
            Some((bp, bs, _)) => primary < *bp || (primary == *bp && secondary < *bs),
        };
        if improves {
            *best = Some((primary, secondary, prefix.clone()));
        }
        return;
    }
    // Preference order makes the first optimum found the tie-break winner.
    for action in PREFERENCE {
        if let Some((a2, d2)) = ctx.transition(a, d, action) {
            prefix.push(action);
            enumerate(ctx, k + 1, a2, d2, prefix, best);
            prefix.pop();
        }
    }
}

fn score(ctx: &SolveContext, actions: &[Action]) -> (f64, f64) {
    match ctx.objective {
        Objective::PeakMin => {
            let peak = peak_from(ctx.forecast, actions, ctx.power, ctx.terminal_peak());
            let moves = actions.iter().filter(|a| !a.is_idle()).count() as f64;
            (peak, moves)
        }
        Objective::SpotMin => {
            let cost = spot_from(
                ctx.forecast,
                ctx.prices.expect("spot objective has prices"),
                actions,
                ctx.power,
                ctx.dt_hours,
            );
            (cost, 0.0)
        }
    }
}
