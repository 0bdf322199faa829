//! Battery model: symmetric power rating, capacity, charge-side efficiency.
//!
//! The battery exposes three actions per interval. Charging draws the full
//! power rating from the grid and banks `efficiency * power * duration` of
//! it; discharging delivers the full rating to the grid and drains exactly
//! that energy. Output power is independent of the stored level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Battery rating and loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    /// Symmetric charge/discharge power rating in kW.
    pub power_kw: f64,
    /// Usable capacity in kWh.
    pub capacity_kwh: f64,
    /// Charge-side efficiency in (0, 1]. Discharge is lossless, so a value
    /// of 0.9 yields a 90 % round trip.
    pub efficiency: f64,
    /// Minimum stored energy the *planner* keeps as headroom, in kWh. The
    /// closed-loop controller is allowed to spend it.
    pub reserve_kwh: f64,
}

impl BatterySpec {
    pub fn new(power_kw: f64, capacity_kwh: f64, efficiency: f64, reserve_kwh: f64) -> Result<Self> {
        let spec = Self {
            power_kw,
            capacity_kwh,
            efficiency,
            reserve_kwh,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power_kw.is_finite() && self.power_kw > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "battery power must be > 0 kW, got {}",
                self.power_kw
            )));
        }
        if !(self.capacity_kwh.is_finite() && self.capacity_kwh > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "battery capacity must be > 0 kWh, got {}",
                self.capacity_kwh
            )));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "battery efficiency must be in (0, 1], got {}",
                self.efficiency
            )));
        }
        if !(self.reserve_kwh >= 0.0 && self.reserve_kwh <= self.capacity_kwh) {
            return Err(Error::InvalidConfig(format!(
                "battery reserve must be in [0, capacity], got {} of {} kWh",
                self.reserve_kwh, self.capacity_kwh
            )));
        }
        Ok(())
    }

    /// Grid-side energy moved by one full-power step of `dt_hours`, in kWh.
    pub fn step_energy_kwh(&self, dt_hours: f64) -> f64 {
        self.power_kw * dt_hours
    }

    /// Stored energy gained by one full-power charge step of `dt_hours`.
    pub fn charge_step_kwh(&self, dt_hours: f64) -> f64 {
        self.efficiency * self.power_kw * dt_hours
    }
}

/// Current stored energy, in kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub stored_kwh: f64,
}

impl BatteryState {
    pub fn new(stored_kwh: f64) -> Self {
        Self { stored_kwh }
    }

    pub fn is_valid_for(&self, spec: &BatterySpec) -> bool {
        self.stored_kwh >= 0.0 && self.stored_kwh <= spec.capacity_kwh
    }
}

/// One battery command for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Discharge,
    Idle,
    Charge,
}

impl Action {
    /// Integer encoding: discharge −1, idle 0, charge +1.
    pub fn sign(self) -> f64 {
        match self {
            Action::Discharge => -1.0,
            Action::Idle => 0.0,
            Action::Charge => 1.0,
        }
    }

    pub fn is_idle(self) -> bool {
        self == Action::Idle
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Discharge => write!(f, "discharge"),
            Action::Idle => write!(f, "idle"),
            Action::Charge => write!(f, "charge"),
        }
    }
}

impl std::str::FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discharge" => Ok(Action::Discharge),
            "idle" => Ok(Action::Idle),
            "charge" => Ok(Action::Charge),
            other => Err(Error::InvalidConfig(format!("unknown action {other:?}"))),
        }
    }
}

/// Applies `action` for `dt_hours` and returns the new state plus the change
/// the battery makes to net grid power (+rating while charging, −rating while
/// discharging).
///
/// Only the physical bounds `[0, capacity]` are enforced here; the planning
/// reserve is a soft floor owned by the optimizer.
pub fn step_battery(
    state: BatteryState,
    action: Action,
    spec: &BatterySpec,
    dt_hours: f64,
) -> Result<(BatteryState, f64)> {
    match action {
        Action::Idle => Ok((state, 0.0)),
        Action::Charge => {
            let next = state.stored_kwh + spec.charge_step_kwh(dt_hours);
            if next > spec.capacity_kwh {
                return Err(Error::InfeasibleAction(format!(
                    "charge would store {next:.6} kWh, above capacity {} kWh",
                    spec.capacity_kwh
                )));
            }
            Ok((BatteryState::new(next), spec.power_kw))
        }
        Action::Discharge => {
            let next = state.stored_kwh - spec.step_energy_kwh(dt_hours);
            if next < 0.0 {
                return Err(Error::InfeasibleAction(format!(
                    "discharge would store {next:.6} kWh, below empty"
                )));
            }
            Ok((BatteryState::new(next), -spec.power_kw))
        }
    }
}

/// Like [`step_battery`] but degrades an infeasible action to idle instead of
/// failing. Returns `(state, grid delta, action actually taken)`.
pub fn step_battery_or_idle(
    state: BatteryState,
    action: Action,
    spec: &BatterySpec,
    dt_hours: f64,
) -> (BatteryState, f64, Action) {
    match step_battery(state, action, spec, dt_hours) {
        Ok((next, delta)) => (next, delta, action),
        Err(_) => (state, 0.0, Action::Idle),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(power: f64, capacity: f64, eta: f64) -> BatterySpec {
        BatterySpec::new(power, capacity, eta, 0.0).unwrap()
    }

    #[test]
    fn charge_quarter_hour_at_full_efficiency() {
        let s = spec(20.0, 20.0, 1.0);
        let (next, delta) = step_battery(BatteryState::new(0.0), Action::Charge, &s, 0.25).unwrap();
        assert_eq!(next.stored_kwh, 5.0);
        assert_eq!(delta, 20.0);
    }

    #[test]
    fn idle_is_identity() {
        let s = spec(20.0, 20.0, 1.0);
        let (next, delta) = step_battery(BatteryState::new(10.0), Action::Idle, &s, 0.25).unwrap();
        assert_eq!(next.stored_kwh, 10.0);
        assert_eq!(delta, 0.0);
    }

    #[test]
    fn charge_with_losses_banks_less() {
        let s = spec(20.0, 20.0, 0.9);
        let (next, delta) = step_battery(BatteryState::new(0.0), Action::Charge, &s, 0.25).unwrap();
        assert_eq!(next.stored_kwh, 4.5);
        assert_eq!(delta, 20.0);
    }

    #[test]
    fn infeasible_actions_report_bound() {
        let s = spec(20.0, 20.0, 1.0);
        let over = step_battery(BatteryState::new(16.0), Action::Charge, &s, 0.25);
        assert!(matches!(over, Err(Error::InfeasibleAction(ref m)) if m.contains("capacity")));
        let under = step_battery(BatteryState::new(4.9), Action::Discharge, &s, 0.25);
        assert!(matches!(under, Err(Error::InfeasibleAction(ref m)) if m.contains("empty")));
    }

    #[test]
    fn charge_then_discharge_round_trips_at_unit_efficiency() {
        let s = spec(20.0, 20.0, 1.0);
        let start = BatteryState::new(7.5);
        let (mid, _) = step_battery(start, Action::Charge, &s, 0.25).unwrap();
        let (back, _) = step_battery(mid, Action::Discharge, &s, 0.25).unwrap();
        assert_eq!(back.stored_kwh, start.stored_kwh);
    }

    #[test]
    fn degrade_to_idle_keeps_state() {
        let s = spec(20.0, 20.0, 1.0);
        let (state, delta, action) =
            step_battery_or_idle(BatteryState::new(0.0), Action::Discharge, &s, 1.0 / 60.0);
        assert_eq!(state.stored_kwh, 0.0);
        assert_eq!(delta, 0.0);
        assert_eq!(action, Action::Idle);
    }

    #[test]
    fn spec_validation_bounds() {
        assert!(BatterySpec::new(0.0, 20.0, 1.0, 0.0).is_err());
        assert!(BatterySpec::new(20.0, 0.0, 1.0, 0.0).is_err());
        assert!(BatterySpec::new(20.0, 20.0, 0.0, 0.0).is_err());
        assert!(BatterySpec::new(20.0, 20.0, 1.1, 0.0).is_err());
        assert!(BatterySpec::new(20.0, 20.0, 1.0, 21.0).is_err());
        assert!(BatterySpec::new(20.0, 20.0, 0.9, 5.0).is_ok());
    }

    proptest::proptest! {
        /// Any feasible action sequence keeps the stored level within bounds.
        #[test]
        fn stored_level_stays_in_bounds(
            power in 1.0f64..50.0,
            capacity in 1.0f64..100.0,
            eta in 0.5f64..=1.0,
            start_frac in 0.0f64..=1.0,
            actions in proptest::collection::vec(0u8..3, 1..200),
        ) {
            let s = BatterySpec::new(power, capacity, eta, 0.0).unwrap();
            let mut state = BatteryState::new(start_frac * capacity);
            for a in actions {
                let action = match a { 0 => Action::Idle, 1 => Action::Charge, _ => Action::Discharge };
                let (next, _, _) = step_battery_or_idle(state, action, &s, 0.25);
                proptest::prop_assert!(next.is_valid_for(&s));
                state = next;
            }
        }
    }
}
