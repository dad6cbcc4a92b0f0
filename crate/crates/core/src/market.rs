//! Physical market model: fleet, battery bookkeeping, and conversion of a
//! continuous dispatch action into delivered energy and supply cost.
//!
//! Timesteps are one hour, so MW and MWh are numerically interchangeable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::HourlyRecord;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("invalid fleet: {0}")]
    Fleet(String),
    #[error("invalid battery: {0}")]
    Battery(String),
    #[error("state of charge {soc} outside [0, {capacity}]")]
    SocOutOfRange { soc: f64, capacity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionalCost {
    HourlyMarketPrice,
    Fixed(f64),
}

impl ConventionalCost {
    pub fn price(&self, record: &HourlyRecord) -> f64 {
        match *self {
            ConventionalCost::HourlyMarketPrice => record.price,
            ConventionalCost::Fixed(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetSpec {
    pub solar_capacity: f64,
    pub wind_capacity: f64,
    pub conventional_capacity: f64,
    pub conventional_cost: ConventionalCost,
    pub renewable_marginal_cost: f64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            solar_capacity: 300.0,
            wind_capacity: 300.0,
            conventional_capacity: 1500.0,
            conventional_cost: ConventionalCost::HourlyMarketPrice,
            renewable_marginal_cost: 0.0,
        }
    }
}

impl FleetSpec {
    pub fn validate(&self) -> Result<(), MarketError> {
        for (name, v) in [
            ("solar_capacity", self.solar_capacity),
            ("wind_capacity", self.wind_capacity),
            ("conventional_capacity", self.conventional_capacity),
            ("renewable_marginal_cost", self.renewable_marginal_cost),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MarketError::Fleet(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if let ConventionalCost::Fixed(p) = self.conventional_cost {
            if !(p.is_finite() && p >= 0.0) {
                return Err(MarketError::Fleet(format!("fixed conventional cost {p} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Nameplate total including the battery's discharge power.
    pub fn total_capacity(&self, battery: &BatterySpec) -> f64 {
        self.solar_capacity + self.wind_capacity + self.conventional_capacity + battery.max_discharge_power
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatterySpec {
    pub energy_capacity: f64,
    pub max_charge_power: f64,
    pub max_discharge_power: f64,
    pub round_trip_efficiency: f64,
    pub initial_soc: f64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        Self {
            energy_capacity: 400.0,
            max_charge_power: 100.0,
            max_discharge_power: 100.0,
            round_trip_efficiency: 0.9,
            initial_soc: 0.0,
        }
    }
}

impl BatterySpec {
    pub fn validate(&self) -> Result<(), MarketError> {
        for (name, v) in [
            ("energy_capacity", self.energy_capacity),
            ("max_charge_power", self.max_charge_power),
            ("max_discharge_power", self.max_discharge_power),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MarketError::Battery(format!("{name} = {v} must be > 0")));
            }
        }
        let eta = self.round_trip_efficiency;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(MarketError::Battery(format!("round_trip_efficiency {eta} outside (0, 1]")));
        }
        if !(0.0..=self.energy_capacity).contains(&self.initial_soc) {
            return Err(MarketError::Battery(format!(
                "initial_soc {} outside [0, {}]",
                self.initial_soc, self.energy_capacity
            )));
        }
        Ok(())
    }

    /// Per-leg efficiency: the round trip is split evenly between charge and
    /// discharge.
    pub fn leg_efficiency(&self) -> f64 {
        self.round_trip_efficiency.sqrt()
    }

    /// Energy the battery can deliver this hour from `soc`.
    pub fn deliverable(&self, soc: f64) -> f64 {
        self.max_discharge_power.min(soc * self.leg_efficiency())
    }
}

/// Fractions of available capacity. `battery_frac < 0` charges, `> 0`
/// discharges.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchAction {
    pub solar_frac: f64,
    pub wind_frac: f64,
    pub conventional_frac: f64,
    pub battery_frac: f64,
}

impl DispatchAction {
    pub fn new(solar_frac: f64, wind_frac: f64, conventional_frac: f64, battery_frac: f64) -> Self {
        Self { solar_frac, wind_frac, conventional_frac, battery_frac }
    }

    /// Clamps every component into its declared interval. NaN maps to 0.
    pub fn clamped(self) -> Self {
        let unit = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        let signed = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Self {
            solar_frac: unit(self.solar_frac),
            wind_frac: unit(self.wind_frac),
            conventional_frac: unit(self.conventional_frac),
            battery_frac: signed(self.battery_frac),
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.solar_frac, self.wind_frac, self.conventional_frac, self.battery_frac]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Violation {
    SolarUnavailable,
    WindUnavailable,
    BatteryOverflow,
    BatteryUnderflow,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchResult {
    pub solar_mwh: f64,
    pub wind_mwh: f64,
    pub conventional_mwh: f64,
    pub battery_discharge_mwh: f64,
    pub battery_charge_mwh: f64,
    pub supply_total_mwh: f64,
    pub supply_cost: f64,
    pub new_soc: f64,
    pub violations: Vec<Violation>,
}

impl DispatchResult {
    /// Charge minus discharge; positive when the battery absorbs energy.
    pub fn battery_net_mwh(&self) -> f64 {
        self.battery_charge_mwh - self.battery_discharge_mwh
    }
}

/// Relative slack used when deciding whether a battery request was clamped.
const CLAMP_TOL: f64 = 1e-12;

pub fn apply_dispatch(
    action: &DispatchAction,
    record: &HourlyRecord,
    fleet: &FleetSpec,
    battery: &BatterySpec,
    soc: f64,
) -> Result<DispatchResult, MarketError> {
    if !(0.0..=battery.energy_capacity).contains(&soc) {
        return Err(MarketError::SocOutOfRange { soc, capacity: battery.energy_capacity });
    }
    let a = action.clamped();
    let mut violations = Vec::new();

    let solar_mwh = if record.solar_cf == 0.0 {
        if a.solar_frac > 0.0 {
            violations.push(Violation::SolarUnavailable);
        }
        0.0
    } else {
        a.solar_frac * fleet.solar_capacity * record.solar_cf
    };
    let wind_mwh = if record.wind_cf == 0.0 {
        if a.wind_frac > 0.0 {
            violations.push(Violation::WindUnavailable);
        }
        0.0
    } else {
        a.wind_frac * fleet.wind_capacity * record.wind_cf
    };
    let conventional_mwh = a.conventional_frac * fleet.conventional_capacity;

    let leg = battery.leg_efficiency();
    let mut discharge = 0.0;
    let mut charge = 0.0;
    if a.battery_frac > 0.0 {
        let requested = a.battery_frac * battery.max_discharge_power;
        let limit = soc * leg;
        if requested > limit * (1.0 + CLAMP_TOL) {
            violations.push(Violation::BatteryUnderflow);
        }
        discharge = requested.min(limit);
    } else if a.battery_frac < 0.0 {
        let requested = -a.battery_frac * battery.max_charge_power;
        let limit = (battery.energy_capacity - soc) / leg;
        if requested > limit * (1.0 + CLAMP_TOL) {
            violations.push(Violation::BatteryOverflow);
        }
        charge = requested.min(limit);
    }
    let new_soc = soc_transition(soc, charge, discharge, battery);

    let supply_cost = fleet.renewable_marginal_cost * (solar_mwh + wind_mwh)
        + fleet.conventional_cost.price(record) * conventional_mwh;

    Ok(DispatchResult {
        solar_mwh,
        wind_mwh,
        conventional_mwh,
        battery_discharge_mwh: discharge,
        battery_charge_mwh: charge,
        supply_total_mwh: solar_mwh + wind_mwh + conventional_mwh + discharge,
        supply_cost,
        new_soc,
        violations,
    })
}

/// `soc + charge * sqrt(eta) - discharge / sqrt(eta)`, clamped against
/// rounding drift at the bounds.
pub fn soc_transition(soc: f64, charge_mwh: f64, discharge_mwh: f64, battery: &BatterySpec) -> f64 {
    let leg = battery.leg_efficiency();
    let next = soc + charge_mwh * leg - discharge_mwh / leg;
    next.clamp(0.0, battery.energy_capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn record(solar_cf: f64, wind_cf: f64) -> HourlyRecord {
        HourlyRecord { hour: 12, demand: 800.0, price: 40.0, solar_cf, wind_cf }
    }

    #[test]
    fn zero_action_is_inert() {
        let b = BatterySpec { initial_soc: 50.0, ..Default::default() };
        let r = apply_dispatch(&DispatchAction::default(), &record(0.5, 0.5), &FleetSpec::default(), &b, 50.0)
            .unwrap();
        assert_eq!(r.supply_total_mwh, 0.0);
        assert_eq!(r.supply_cost, 0.0);
        assert_eq!(r.new_soc, 50.0);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn night_solar_is_a_violation() {
        let a = DispatchAction::new(1.0, 0.0, 0.0, 0.0);
        let r = apply_dispatch(&a, &record(0.0, 0.3), &FleetSpec::default(), &BatterySpec::default(), 0.0)
            .unwrap();
        assert_eq!(r.solar_mwh, 0.0);
        assert_eq!(r.violations, vec![Violation::SolarUnavailable]);

        let a = DispatchAction::new(0.0, 0.7, 0.0, 0.0);
        let r = apply_dispatch(&a, &record(0.3, 0.0), &FleetSpec::default(), &BatterySpec::default(), 0.0)
            .unwrap();
        assert_eq!(r.violations, vec![Violation::WindUnavailable]);
    }

    #[test]
    fn empty_battery_underflows() {
        let a = DispatchAction::new(0.0, 0.0, 0.0, 1.0);
        let r = apply_dispatch(&a, &record(0.5, 0.5), &FleetSpec::default(), &BatterySpec::default(), 0.0)
            .unwrap();
        assert_eq!(r.battery_discharge_mwh, 0.0);
        assert!(r.violations.contains(&Violation::BatteryUnderflow));
    }

    #[test]
    fn full_battery_overflows() {
        let b = BatterySpec::default();
        let a = DispatchAction::new(0.0, 0.0, 0.0, -1.0);
        let r = apply_dispatch(&a, &record(0.5, 0.5), &FleetSpec::default(), &b, b.energy_capacity - 10.0)
            .unwrap();
        assert!(r.violations.contains(&Violation::BatteryOverflow));
        assert_relative_eq!(r.new_soc, b.energy_capacity, max_relative = 1e-12);
    }

    #[test]
    fn solar_is_direct_product() {
        let fleet = FleetSpec { solar_capacity: 100.0, ..Default::default() };
        let a = DispatchAction::new(0.5, 0.0, 0.0, 0.0);
        let r = apply_dispatch(&a, &record(0.8, 0.0), &fleet, &BatterySpec::default(), 0.0).unwrap();
        assert_relative_eq!(r.solar_mwh, 40.0, max_relative = 1e-12);
    }

    #[test]
    fn soc_out_of_range_is_rejected() {
        let b = BatterySpec::default();
        let err = apply_dispatch(&DispatchAction::default(), &record(0.0, 0.0), &FleetSpec::default(), &b, -1.0);
        assert!(matches!(err, Err(MarketError::SocOutOfRange { .. })));
    }

    #[test]
    fn soc_transition_examples() {
        let lossless = BatterySpec { round_trip_efficiency: 1.0, ..Default::default() };
        assert_eq!(soc_transition(50.0, 10.0, 0.0, &lossless), 60.0);
        assert_eq!(soc_transition(50.0, 0.0, 10.0, &lossless), 40.0);
        let lossy = BatterySpec { round_trip_efficiency: 0.81, ..Default::default() };
        assert_relative_eq!(soc_transition(50.0, 10.0, 0.0, &lossy), 59.0, max_relative = 1e-12);
    }

    #[test]
    fn fixed_conventional_cost() {
        let fleet = FleetSpec { conventional_cost: ConventionalCost::Fixed(30.0), ..Default::default() };
        let a = DispatchAction::new(0.0, 0.0, 0.1, 0.0);
        let r = apply_dispatch(&a, &record(0.0, 0.0), &fleet, &BatterySpec::default(), 0.0).unwrap();
        assert_relative_eq!(r.supply_cost, 150.0 * 30.0, max_relative = 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(BatterySpec { round_trip_efficiency: 0.0, ..Default::default() }.validate().is_err());
        assert!(BatterySpec { initial_soc: 500.0, ..Default::default() }.validate().is_err());
        assert!(FleetSpec { wind_capacity: -1.0, ..Default::default() }.validate().is_err());
        assert!(FleetSpec::default().validate().is_ok());
    }

    fn action_strategy() -> impl Strategy<Value = DispatchAction> {
        (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, -1.0..=1.0f64)
            .prop_map(|(s, w, c, b)| DispatchAction::new(s, w, c, b))
    }

    proptest! {
        #[test]
        fn soc_stays_in_bounds_and_energy_is_conserved(
            actions in proptest::collection::vec(action_strategy(), 1..60),
            eta in 0.5..=1.0f64,
            init in 0.0..=1.0f64,
        ) {
            let battery = BatterySpec {
                round_trip_efficiency: eta,
                initial_soc: init * 400.0,
                ..Default::default()
            };
            let fleet = FleetSpec::default();
            let leg = battery.leg_efficiency();
            let mut soc = battery.initial_soc;
            let (mut charged, mut discharged) = (0.0, 0.0);
            for (i, a) in actions.iter().enumerate() {
                let rec = record(if i % 3 == 0 { 0.0 } else { 0.6 }, 0.4);
                let r = apply_dispatch(a, &rec, &fleet, &battery, soc).unwrap();
                prop_assert!(r.new_soc >= 0.0 && r.new_soc <= battery.energy_capacity);
                prop_assert!(!(r.battery_charge_mwh > 0.0 && r.battery_discharge_mwh > 0.0));
                if rec.solar_cf == 0.0 {
                    prop_assert_eq!(r.solar_mwh, 0.0);
                }
                charged += r.battery_charge_mwh;
                discharged += r.battery_discharge_mwh;
                soc = r.new_soc;
            }
            let lhs = charged * leg - discharged / leg;
            prop_assert!((lhs - (soc - battery.initial_soc)).abs() < 1e-9);
        }

        #[test]
        fn cost_is_monotone_in_conventional(a in action_strategy(), lo in 0.0..=1.0f64, hi in 0.0..=1.0f64) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let fleet = FleetSpec::default();
            let b = BatterySpec::default();
            let rec = record(0.5, 0.5);
            let c_lo = apply_dispatch(&DispatchAction { conventional_frac: lo, ..a }, &rec, &fleet, &b, 100.0).unwrap();
            let c_hi = apply_dispatch(&DispatchAction { conventional_frac: hi, ..a }, &rec, &fleet, &b, 100.0).unwrap();
            prop_assert!(c_hi.supply_cost >= c_lo.supply_cost);
        }
    }
}
