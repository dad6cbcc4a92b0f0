//! Per-hour best-bound cost by merit-order dispatch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::market::{BatterySpec, FleetSpec};
use crate::profiles::HourlyRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeritOffer {
    pub source_id: String,
    pub available_mwh: f64,
    pub marginal_cost: f64,
    /// Declaration order; breaks ties between equal marginal costs.
    pub tie_rank: usize,
}

impl MeritOffer {
    pub fn new(source_id: impl Into<String>, available_mwh: f64, marginal_cost: f64, tie_rank: usize) -> Self {
        Self { source_id: source_id.into(), available_mwh, marginal_cost, tie_rank }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundResult {
    pub total_cost: f64,
    pub dispatched: BTreeMap<String, f64>,
    pub unmet_mwh: f64,
}

/// Fills `demand` from the cheapest offers first. Insufficient supply is
/// reported through `unmet_mwh`.
pub fn best_bound(demand: f64, offers: &[MeritOffer]) -> BoundResult {
    debug_assert!(demand >= 0.0, "demand must be non-negative");
    let mut order: Vec<&MeritOffer> = offers.iter().collect();
    order.sort_by(|a, b| {
        a.marginal_cost
            .total_cmp(&b.marginal_cost)
            .then(a.tie_rank.cmp(&b.tie_rank))
    });

    let mut remaining = demand.max(0.0);
    let mut result = BoundResult::default();
    for offer in order {
        let take = remaining.min(offer.available_mwh.max(0.0));
        *result.dispatched.entry(offer.source_id.clone()).or_insert(0.0) += take;
        result.total_cost += take * offer.marginal_cost;
        remaining -= take;
    }
    result.unmet_mwh = remaining;
    result
}

/// One offer per source for the given hour. The battery is offered at zero
/// cost up to what it can deliver from `soc`; pass `include_battery = false`
/// to leave it out of the bound.
pub fn hourly_offers(
    record: &HourlyRecord,
    fleet: &FleetSpec,
    battery: &BatterySpec,
    soc: f64,
    include_battery: bool,
) -> Vec<MeritOffer> {
    let mut offers = vec![
        MeritOffer::new("solar", fleet.solar_capacity * record.solar_cf, fleet.renewable_marginal_cost, 0),
        MeritOffer::new("wind", fleet.wind_capacity * record.wind_cf, fleet.renewable_marginal_cost, 1),
        MeritOffer::new(
            "conventional",
            fleet.conventional_capacity,
            fleet.conventional_cost.price(record),
            2,
        ),
    ];
    if include_battery {
        offers.push(MeritOffer::new("battery", battery.deliverable(soc), 0.0, 3));
    }
    offers
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn cheapest_first() {
        let offers = [
            MeritOffer::new("solar", 30.0, 0.0, 0),
            MeritOffer::new("wind", 20.0, 0.0, 1),
            MeritOffer::new("conventional", 200.0, 50.0, 2),
        ];
        let r = best_bound(100.0, &offers);
        assert_eq!(r.dispatched["solar"], 30.0);
        assert_eq!(r.dispatched["wind"], 20.0);
        assert_eq!(r.dispatched["conventional"], 50.0);
        assert_eq!(r.total_cost, 2500.0);
        assert_eq!(r.unmet_mwh, 0.0);
    }

    #[test]
    fn zero_demand() {
        let offers = [MeritOffer::new("a", 10.0, 5.0, 0), MeritOffer::new("b", 10.0, 1.0, 1)];
        let r = best_bound(0.0, &offers);
        assert_eq!(r.total_cost, 0.0);
        assert!(r.dispatched.values().all(|&v| v == 0.0));
    }

    #[test]
    fn ties_follow_declaration_order() {
        let offers = [MeritOffer::new("second", 60.0, 10.0, 1), MeritOffer::new("first", 60.0, 10.0, 0)];
        let r = best_bound(100.0, &offers);
        assert_eq!(r.dispatched["first"], 60.0);
        assert_eq!(r.dispatched["second"], 40.0);
    }

    #[test]
    fn shortfall_is_unmet() {
        let r = best_bound(100.0, &[MeritOffer::new("a", 30.0, 2.0, 0)]);
        assert_eq!(r.unmet_mwh, 70.0);
        assert_eq!(r.total_cost, 60.0);
    }

    #[test]
    fn hourly_offer_quantities() {
        let fleet = FleetSpec { solar_capacity: 200.0, ..Default::default() };
        let battery = BatterySpec::default();
        let night = HourlyRecord { hour: 2, demand: 500.0, price: 20.0, solar_cf: 0.0, wind_cf: 0.4 };
        let offers = hourly_offers(&night, &fleet, &battery, 0.0, true);
        assert_eq!(offers[0].available_mwh, 0.0);
        assert_eq!(offers[3].available_mwh, 0.0);
        assert_eq!(offers[2].marginal_cost, 20.0);

        let noon = HourlyRecord { solar_cf: 0.5, ..night };
        let offers = hourly_offers(&noon, &fleet, &battery, 400.0, true);
        assert_eq!(offers[0].available_mwh, 100.0);
        assert_eq!(offers[3].available_mwh, 100.0);
        assert_eq!(hourly_offers(&noon, &fleet, &battery, 400.0, false).len(), 3);

        let partial = hourly_offers(&noon, &fleet, &battery, 50.0, true);
        assert_relative_eq!(partial[3].available_mwh, 50.0 * 0.9f64.sqrt(), max_relative = 1e-12);
    }

    fn offers_strategy() -> impl Strategy<Value = Vec<MeritOffer>> {
        proptest::collection::vec((0.0..100.0f64, 0.0..80.0f64), 1..6).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (q, c))| MeritOffer::new(format!("g{i}"), q, c, i))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn balance_and_capacity(offers in offers_strategy(), demand in 0.0..400.0f64) {
            let r = best_bound(demand, &offers);
            let total: f64 = r.dispatched.values().sum();
            prop_assert!((total + r.unmet_mwh - demand).abs() < 1e-9);
            for o in &offers {
                prop_assert!(r.dispatched[&o.source_id] <= o.available_mwh + 1e-12);
            }
        }

        #[test]
        fn no_feasible_dispatch_is_cheaper(offers in offers_strategy(), demand in 0.0..200.0f64,
                                           weights in proptest::collection::vec(0.0..1.0f64, 6)) {
            let cap: f64 = offers.iter().map(|o| o.available_mwh).sum();
            prop_assume!(cap >= demand);
            // Random feasible dispatch: proportional split of demand capped by availability.
            let mut remaining = demand;
            let mut cost = 0.0;
            let mut alloc = vec![0.0; offers.len()];
            for (i, o) in offers.iter().enumerate() {
                let t = (weights[i] * o.available_mwh).min(remaining);
                alloc[i] = t;
                remaining -= t;
            }
            for (i, o) in offers.iter().enumerate() {
                let t = (o.available_mwh - alloc[i]).min(remaining);
                alloc[i] += t;
                remaining -= t;
            }
            for (i, o) in offers.iter().enumerate() {
                cost += alloc[i] * o.marginal_cost;
            }
            let bound = best_bound(demand, &offers);
            prop_assert!(cost >= bound.total_cost - 1e-6 * (1.0 + cost.abs()));
        }

        #[test]
        fn distinct_cost_permutation_invariance(offers in offers_strategy(), demand in 0.0..300.0f64, rot in 0usize..6) {
            let mut costs: Vec<f64> = offers.iter().map(|o| o.marginal_cost).collect();
            costs.sort_by(f64::total_cmp);
            prop_assume!(costs.windows(2).all(|w| w[0] != w[1]));
            let mut shuffled = offers.clone();
            let n = shuffled.len();
            shuffled.rotate_left(rot % n);
            shuffled.reverse();
            let a = best_bound(demand, &offers).total_cost;
            let b = best_bound(demand, &shuffled).total_cost;
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn cost_scaling(offers in offers_strategy(), demand in 0.0..300.0f64, k in 0.01..50.0f64) {
            let scaled: Vec<MeritOffer> = offers
                .iter()
                .map(|o| MeritOffer { marginal_cost: o.marginal_cost * k, ..o.clone() })
                .collect();
            let a = best_bound(demand, &offers);
            let b = best_bound(demand, &scaled);
            prop_assert!((b.total_cost - k * a.total_cost).abs() <= 1e-9 * (1.0 + b.total_cost.abs()));
            prop_assert_eq!(a.dispatched, b.dispatched);
        }
    }
}
