//! The merit-order best bound: a hand-built instance, then the offers the
//! environment builds for two hours of the synthetic day.

use dayahead::dispatch_bound::{best_bound, hourly_offers, MeritOffer};
use dayahead::market::{BatterySpec, FleetSpec};
use dayahead::profiles::synthesize_default;

fn main() {
    let offers = [
        MeritOffer::new("solar", 30.0, 0.0, 0),
        MeritOffer::new("wind", 20.0, 0.0, 1),
        MeritOffer::new("conventional", 200.0, 50.0, 2),
    ];
    let r = best_bound(100.0, &offers);
    println!("demand 100: cost {} dispatched {:?} unmet {}", r.total_cost, r.dispatched, r.unmet_mwh);

    let short = best_bound(300.0, &offers);
    println!("demand 300: cost {} unmet {}", short.total_cost, short.unmet_mwh);

    let profile = synthesize_default();
    let fleet = FleetSpec::default();
    let battery = BatterySpec::default();
    for (hour, soc) in [(3, 0.0), (13, 0.0), (19, 250.0)] {
        let record = profile.record(hour);
        let offers = hourly_offers(record, &fleet, &battery, soc, true);
        let bound = best_bound(record.demand, &offers);
        println!("hour {hour:2} soc {soc:5.0}: demand {:.1} bound ${:.0}", record.demand, bound.total_cost);
        for o in &offers {
            println!(
                "    {:12} {:7.1} MWh @ {:5.2}  -> {:7.1}",
                o.source_id, o.available_mwh, o.marginal_cost, bound.dispatched[&o.source_id]
            );
        }
    }
}
