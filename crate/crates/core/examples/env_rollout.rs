//! Drives the environment with a hand-written rule: take all renewables,
//! fill the rest with conventional, leave the battery idle.

use dayahead::env::{EnvConfig, MarketEnv};
use dayahead::market::DispatchAction;
use dayahead::profiles::synthesize_default;

fn main() -> anyhow::Result<()> {
    let config = EnvConfig::default();
    let fleet = config.fleet;
    let mut env = MarketEnv::new(synthesize_default(), config)?;
    let first = env.reset(11);
    println!("hour 0 demand forecast {:?}", first.demand_forecast.map(|d| d.round()));
    println!("observation vector {:?}", env.observe().map(|v| (v * 1000.0).round() / 1000.0));

    let mut total = 0.0;
    while !env.is_done() {
        let rec = *env.working_profile().record(env.hour());
        let renewables = rec.solar_cf * fleet.solar_capacity + rec.wind_cf * fleet.wind_capacity;
        let conventional = ((rec.demand - renewables) / fleet.conventional_capacity).clamp(0.0, 1.0);
        let solar = if rec.solar_cf > 0.0 { 1.0 } else { 0.0 };
        let out = env.step(DispatchAction::new(solar, 1.0, conventional, 0.0))?;
        total += out.reward;
        let i = &out.info;
        println!(
            "hour {:2} gap {:5.2}% cost gap {:5.2}% reward {:+.4} violations {:?}",
            i.hour, i.imbalance_gap_pct, i.best_bound_gap_pct, out.reward, i.violations
        );
    }
    println!("episode return {total:.4}");

    // Asking for solar at night is an invalid action and is penalised.
    env.reset(11);
    let out = env.step(DispatchAction::new(1.0, 1.0, 0.4, 0.0))?;
    println!("solar at midnight: reward {:+.3} violations {:?}", out.reward, out.info.violations);
    Ok(())
}
