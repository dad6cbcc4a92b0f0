//! Day-ahead market MDP with a reset/step contract.
//!
//! One episode is one market day of 24 hourly decisions. The working profile
//! of each episode is the base profile perturbed with the reset seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch_bound::{best_bound, hourly_offers};
use crate::evaluation::{best_bound_gap_pct, imbalance_gap_pct};
use crate::market::{apply_dispatch, BatterySpec, DispatchAction, DispatchResult, FleetSpec, MarketError, Violation};
use crate::profiles::{perturb, DayProfile, HourlyRecord, PerturbationSpec, HOURS_PER_DAY};

pub const FORECAST_HORIZON: usize = 7;
pub const OBS_DIM: usize = 4 + 2 * FORECAST_HORIZON + 1;
pub const ACTION_DIM: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("fleet capacity {capacity:.1} MW cannot cover peak demand {peak:.1} MWh")]
    InsufficientCapacity { capacity: f64, peak: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("step called on a finished episode; call reset first")]
    EpisodeDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumTargets {
    pub imbalance_gap_target_pct: f64,
    pub best_bound_gap_target_pct: f64,
}

impl CurriculumTargets {
    pub fn new(imbalance_gap_target_pct: f64, best_bound_gap_target_pct: f64) -> Result<Self, EnvError> {
        let t = Self { imbalance_gap_target_pct, best_bound_gap_target_pct };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.imbalance_gap_target_pct > 0.0 && self.best_bound_gap_target_pct > 0.0) {
            return Err(EnvError::Config(format!(
                "curriculum targets must be positive, got ({}, {})",
                self.imbalance_gap_target_pct, self.best_bound_gap_target_pct
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w_imbalance: f64,
    pub w_cost: f64,
    /// Charged once per violation tag.
    pub penalty_invalid: f64,
    /// Paid in proportion to the fraction of battery power moved when the
    /// move agrees with the price forecast.
    pub arbitrage_bonus: f64,
    /// Charged per hour left in the day when an episode stops early.
    pub termination_penalty: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_imbalance: 3.0,
            w_cost: 1.0,
            penalty_invalid: 2.0,
            arbitrage_bonus: 0.2,
            termination_penalty: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), EnvError> {
        let all = [
            self.w_imbalance,
            self.w_cost,
            self.penalty_invalid,
            self.arbitrage_bonus,
            self.termination_penalty,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(EnvError::Config(format!("reward weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub fleet: FleetSpec,
    pub battery: BatterySpec,
    pub reward: RewardWeights,
    pub perturbation_amplitude: f64,
    pub early_stop_multiplier: f64,
    pub observe_soc: bool,
    pub bound_includes_battery: bool,
    pub price_scale: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            fleet: FleetSpec::default(),
            battery: BatterySpec::default(),
            reward: RewardWeights::default(),
            perturbation_amplitude: 0.05,
            early_stop_multiplier: 3.0,
            observe_soc: true,
            bound_includes_battery: true,
            price_scale: 100.0,
        }
    }
}

/// Divisors applied by [`observe_vector`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationScales {
    /// Total fleet capacity including battery discharge power.
    pub demand: f64,
    pub price: f64,
    pub soc: f64,
    /// Peak demand of the base profile.
    pub imbalance: f64,
    /// Peak demand times the price scale.
    pub best_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub hour: usize,
    pub solar_cf_now: f64,
    pub wind_cf_now: f64,
    /// Demand minus supply of the previous step; 0 after reset.
    pub imbalance_now: f64,
    pub best_bound_now: f64,
    pub demand_forecast: [f64; FORECAST_HORIZON],
    pub price_forecast: [f64; FORECAST_HORIZON],
    pub soc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub hour: usize,
    pub demand: f64,
    /// Demand plus battery charging: the denominator of the imbalance gap.
    pub effective_demand: f64,
    pub price: f64,
    pub imbalance_gap_pct: f64,
    pub best_bound_gap_pct: f64,
    pub supply_cost: f64,
    pub best_bound: f64,
    pub violations: Vec<Violation>,
    pub soc: f64,
    pub arbitrage_term: f64,
    pub dispatch: DispatchResult,
    pub terminated_early: bool,
    /// Set on the final step of an episode.
    pub episode_success: Option<bool>,
    pub episode_mean_gap_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: MarketState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
pub struct MarketEnv {
    config: EnvConfig,
    base: DayProfile,
    working: DayProfile,
    targets: CurriculumTargets,
    early_stop: bool,
    hour: usize,
    soc: f64,
    imbalance_now: f64,
    done: bool,
    gap_sum: f64,
    steps: usize,
}

impl MarketEnv {
    pub fn new(profile: DayProfile, config: EnvConfig) -> Result<Self, EnvError> {
        config.fleet.validate()?;
        config.battery.validate()?;
        config.reward.validate()?;
        PerturbationSpec::new(config.perturbation_amplitude, 0)
            .map_err(|e| EnvError::Config(e.to_string()))?;
        if !(config.early_stop_multiplier > 0.0) {
            return Err(EnvError::Config("early_stop_multiplier must be > 0".into()));
        }
        if !(config.price_scale > 0.0) {
            return Err(EnvError::Config("price_scale must be > 0".into()));
        }
        let capacity = config.fleet.total_capacity(&config.battery);
        let peak = profile.peak_demand();
        if capacity < peak {
            return Err(EnvError::InsufficientCapacity { capacity, peak });
        }
        let soc = config.battery.initial_soc;
        Ok(Self {
            working: profile.clone(),
            base: profile,
            targets: CurriculumTargets { imbalance_gap_target_pct: 2.0, best_bound_gap_target_pct: 10.0 },
            early_stop: true,
            hour: 0,
            soc,
            imbalance_now: 0.0,
            done: true,
            gap_sum: 0.0,
            steps: 0,
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn base_profile(&self) -> &DayProfile {
        &self.base
    }

    /// Profile of the current episode (after perturbation).
    pub fn working_profile(&self) -> &DayProfile {
        &self.working
    }

    pub fn targets(&self) -> CurriculumTargets {
        self.targets
    }

    pub fn set_targets(&mut self, targets: CurriculumTargets) -> Result<(), EnvError> {
        targets.validate()?;
        self.targets = targets;
        Ok(())
    }

    /// Imbalance gap above which an episode ends early.
    pub fn early_stop_threshold_pct(&self) -> f64 {
        self.config.early_stop_multiplier * self.targets.imbalance_gap_target_pct
    }

    /// Evaluation runs disable early stopping so every episode spans 24 hours.
    pub fn set_early_stop(&mut self, enabled: bool) {
        self.early_stop = enabled;
    }

    pub fn scales(&self) -> ObservationScales {
        let peak = self.base.peak_demand().max(f64::MIN_POSITIVE);
        ObservationScales {
            demand: self.config.fleet.total_capacity(&self.config.battery),
            price: self.config.price_scale,
            soc: self.config.battery.energy_capacity,
            imbalance: peak,
            best_bound: peak * self.config.price_scale,
        }
    }

    pub fn reset(&mut self, seed: u64) -> MarketState {
        let spec = PerturbationSpec { amplitude: self.config.perturbation_amplitude, seed };
        self.working = perturb(&self.base, &spec);
        self.hour = 0;
        self.soc = self.config.battery.initial_soc;
        self.imbalance_now = 0.0;
        self.done = false;
        self.gap_sum = 0.0;
        self.steps = 0;
        self.state()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn hour(&self) -> usize {
        self.hour
    }

    fn bound_for(&self, record: &HourlyRecord) -> f64 {
        let c = &self.config;
        let offers = hourly_offers(record, &c.fleet, &c.battery, self.soc, c.bound_includes_battery);
        best_bound(record.demand, &offers).total_cost
    }

    fn state(&self) -> MarketState {
        let h = self.hour.min(HOURS_PER_DAY - 1);
        let rec = *self.working.record(h);
        let mut demand_forecast = [0.0; FORECAST_HORIZON];
        let mut price_forecast = [0.0; FORECAST_HORIZON];
        for k in 0..FORECAST_HORIZON {
            let r = self.working.record((h + k).min(HOURS_PER_DAY - 1));
            demand_forecast[k] = r.demand;
            price_forecast[k] = r.price;
        }
        MarketState {
            hour: h,
            solar_cf_now: rec.solar_cf,
            wind_cf_now: rec.wind_cf,
            imbalance_now: self.imbalance_now,
            best_bound_now: self.bound_for(&rec),
            demand_forecast,
            price_forecast,
            soc: self.soc,
        }
    }

    pub fn observe(&self) -> [f64; OBS_DIM] {
        let mut v = observe_vector(&self.state(), &self.scales());
        if !self.config.observe_soc {
            v[OBS_DIM - 1] = 0.0;
        }
        v
    }

    pub fn step(&mut self, action: DispatchAction) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let c = &self.config;
        let state = self.state();
        let record = *self.working.record(self.hour);
        let dispatch = apply_dispatch(&action, &record, &c.fleet, &c.battery, self.soc)?;

        let effective_demand = record.demand + dispatch.battery_charge_mwh;
        let supply = dispatch.supply_total_mwh;
        let gap = imbalance_gap_pct(effective_demand, supply)
            .unwrap_or(if supply == 0.0 { 0.0 } else { 100.0 });
        let bound = state.best_bound_now;
        let cost_gap = best_bound_gap_pct(dispatch.supply_cost, bound)
            .unwrap_or(if bound <= 0.0 { 0.0 } else { 100.0 });

        let forecast_mean = state.price_forecast.iter().sum::<f64>() / FORECAST_HORIZON as f64;
        let arbitrage_term = if dispatch.battery_charge_mwh > 0.0 && record.price < forecast_mean {
            c.reward.arbitrage_bonus * dispatch.battery_charge_mwh / c.battery.max_charge_power
        } else if dispatch.battery_discharge_mwh > 0.0 && record.price > forecast_mean {
            c.reward.arbitrage_bonus * dispatch.battery_discharge_mwh / c.battery.max_discharge_power
        } else {
            0.0
        };

        let mut reward = -c.reward.w_imbalance * gap / 100.0 - c.reward.w_cost * cost_gap / 100.0
            - c.reward.penalty_invalid * dispatch.violations.len() as f64
            + arbitrage_term;

        let terminated_early = self.early_stop && gap > self.early_stop_threshold_pct();
        self.gap_sum += gap;
        self.steps += 1;
        self.hour += 1;
        self.soc = dispatch.new_soc;
        self.imbalance_now = effective_demand - supply;
        let finished = self.hour >= HOURS_PER_DAY;
        if terminated_early && !finished {
            reward -= c.reward.termination_penalty * (HOURS_PER_DAY - self.hour) as f64;
        }
        self.done = finished || terminated_early;

        let (episode_success, episode_mean_gap_pct) = if self.done {
            let mean = self.gap_sum / self.steps as f64;
            let success = !terminated_early && mean <= self.targets.imbalance_gap_target_pct;
            (Some(success), Some(mean))
        } else {
            (None, None)
        };

        let info = StepInfo {
            hour: record.hour,
            demand: record.demand,
            effective_demand,
            price: record.price,
            imbalance_gap_pct: gap,
            best_bound_gap_pct: cost_gap,
            supply_cost: dispatch.supply_cost,
            best_bound: bound,
            violations: dispatch.violations.clone(),
            soc: dispatch.new_soc,
            arbitrage_term,
            dispatch,
            terminated_early,
            episode_success,
            episode_mean_gap_pct,
        };
        Ok(StepResult { observation: self.state(), reward, done: self.done, info })
    }
}

/// Fixed-order 19-element encoding: solar cf, wind cf, imbalance, best bound,
/// 7 demand forecasts, 7 price forecasts, state of charge.
pub fn observe_vector(state: &MarketState, scales: &ObservationScales) -> [f64; OBS_DIM] {
    let mut v = [0.0; OBS_DIM];
    v[0] = state.solar_cf_now;
    v[1] = state.wind_cf_now;
    v[2] = state.imbalance_now / scales.imbalance;
    v[3] = state.best_bound_now / scales.best_bound;
    for k in 0..FORECAST_HORIZON {
        v[4 + k] = state.demand_forecast[k] / scales.demand;
        v[4 + FORECAST_HORIZON + k] = state.price_forecast[k] / scales.price;
    }
    v[OBS_DIM - 1] = state.soc / scales.soc;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::synthesize_default;

    fn env() -> MarketEnv {
        MarketEnv::new(synthesize_default(), EnvConfig { perturbation_amplitude: 0.0, ..Default::default() }).unwrap()
    }

    /// Action meeting this hour's demand exactly in merit order, no battery.
    fn balancing_action(env: &MarketEnv) -> DispatchAction {
        let c = env.config();
        let r = env.working_profile().record(env.hour());
        let renew = c.fleet.solar_capacity * r.solar_cf + c.fleet.wind_capacity * r.wind_cf;
        let conv = ((r.demand - renew) / c.fleet.conventional_capacity).clamp(0.0, 1.0);
        let solar = if r.solar_cf > 0.0 { 1.0 } else { 0.0 };
        DispatchAction::new(solar, 1.0, conv, 0.0)
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = MarketEnv::new(synthesize_default(), EnvConfig::default()).unwrap();
        let mut b = a.clone();
        let sa = a.reset(11);
        assert_eq!(sa, b.reset(11));
        assert_ne!(sa, b.reset(12));
        assert_eq!(sa.hour, 0);
        assert_eq!(sa.soc, EnvConfig::default().battery.initial_soc);
        assert_eq!(sa.imbalance_now, 0.0);
    }

    #[test]
    fn zero_amplitude_forecasts_follow_base() {
        let mut e = env();
        let s = e.reset(3);
        let base = synthesize_default();
        for k in 0..FORECAST_HORIZON {
            assert_eq!(s.demand_forecast[k], base.record(k).demand);
            assert_eq!(s.price_forecast[k], base.record(k).price);
        }
    }

    #[test]
    fn forecast_pads_with_last_hour() {
        let mut e = env();
        e.reset(0);
        e.set_early_stop(false);
        for _ in 0..20 {
            e.step(DispatchAction::default()).unwrap();
        }
        let s = e.state();
        assert_eq!(s.hour, 20);
        let last = e.working_profile().record(23).demand;
        assert_eq!(&s.demand_forecast[3..], &[last; 4]);
    }

    #[test]
    fn zero_action_gives_full_gap() {
        let mut e = env();
        e.reset(0);
        let r = e.step(DispatchAction::default()).unwrap();
        assert_eq!(r.info.imbalance_gap_pct, 100.0);
        assert!(r.info.violations.is_empty());
        assert!(r.reward <= -1.0);
    }

    #[test]
    fn night_solar_costs_reward() {
        let mut e = env();
        e.reset(0);
        e.set_early_stop(false);
        for _ in 0..2 {
            let a = balancing_action(&e);
            e.step(a).unwrap();
        }
        assert_eq!(e.working_profile().record(2).solar_cf, 0.0);
        let base = balancing_action(&e);
        let mut other = e.clone();
        let clean = e.step(base).unwrap();
        let dirty = other.step(DispatchAction { solar_frac: 1.0, ..base }).unwrap();
        assert!(dirty.reward < clean.reward);
        assert!(dirty.info.violations.contains(&Violation::SolarUnavailable));
        let diff = clean.reward - dirty.reward;
        assert!((diff - e.config().reward.penalty_invalid).abs() < 1e-12);
    }

    #[test]
    fn cheap_hour_charging_earns_bonus() {
        let mut e = env();
        e.reset(0);
        e.set_early_stop(false);
        for _ in 0..3 {
            let a = balancing_action(&e);
            e.step(a).unwrap();
        }
        let s = e.state();
        let mean = s.price_forecast.iter().sum::<f64>() / 7.0;
        assert!(e.working_profile().record(3).price < mean);
        let base = balancing_action(&e);
        let mut other = e.clone();
        let idle = e.step(base).unwrap();
        let charge = other.step(DispatchAction { battery_frac: -1.0, ..base }).unwrap();
        assert_eq!(idle.info.arbitrage_term, 0.0);
        assert!((charge.info.arbitrage_term - e.config().reward.arbitrage_bonus).abs() < 1e-12);
        assert!(charge.info.dispatch.battery_charge_mwh > 0.0);
    }

    #[test]
    fn balanced_merit_dispatch_has_zero_gap_terms() {
        let mut e = env();
        e.reset(0);
        let r = e.step(balancing_action(&e)).unwrap();
        assert!(r.info.imbalance_gap_pct.abs() < 1e-9);
        assert!(r.info.best_bound_gap_pct.abs() < 1e-9);
        assert!((r.reward - r.info.arbitrage_term).abs() < 1e-9);
    }

    #[test]
    fn targets_and_early_stop() {
        let mut e = env();
        e.set_targets(CurriculumTargets::new(40.0, 40.0).unwrap()).unwrap();
        assert_eq!(e.early_stop_threshold_pct(), 120.0);
        e.set_targets(CurriculumTargets::new(2.0, 10.0).unwrap()).unwrap();
        assert_eq!(e.early_stop_threshold_pct(), 6.0);
        assert!(CurriculumTargets::new(0.0, 10.0).is_err());
        assert!(e.set_targets(CurriculumTargets { imbalance_gap_target_pct: 0.0, best_bound_gap_target_pct: 10.0 }).is_err());

        e.reset(0);
        let r = e.step(DispatchAction::default()).unwrap();
        assert!(r.done && r.info.terminated_early);
        assert_eq!(r.info.episode_success, Some(false));
        assert_eq!(e.step(DispatchAction::default()), Err(EnvError::EpisodeDone));
    }

    #[test]
    fn full_episode_is_24_steps() {
        let mut e = env();
        e.reset(5);
        let mut n = 0;
        loop {
            let a = balancing_action(&e);
            let r = e.step(a).unwrap();
            n += 1;
            if r.done {
                assert_eq!(r.info.episode_success, Some(true));
                break;
            }
        }
        assert_eq!(n, 24);
    }

    #[test]
    fn observation_encoding() {
        let e = env();
        let scales = e.scales();
        let mut s = e.state();
        assert_eq!(observe_vector(&s, &scales).len(), 19);
        s.soc = e.config().battery.energy_capacity;
        assert_eq!(observe_vector(&s, &scales)[18], 1.0);

        let zero = MarketState {
            hour: 0,
            solar_cf_now: 0.0,
            wind_cf_now: 0.0,
            imbalance_now: 0.0,
            best_bound_now: 0.0,
            demand_forecast: [0.0; 7],
            price_forecast: [0.0; 7],
            soc: 0.0,
        };
        let v = observe_vector(&zero, &scales);
        assert!(v.iter().enumerate().all(|(i, &x)| i == 3 || x == 0.0));
    }

    #[test]
    fn insufficient_fleet_rejected() {
        let config = EnvConfig {
            fleet: FleetSpec { conventional_capacity: 100.0, ..Default::default() },
            ..Default::default()
        };
        assert!(matches!(
            MarketEnv::new(synthesize_default(), config),
            Err(EnvError::InsufficientCapacity { .. })
        ));
    }
}
