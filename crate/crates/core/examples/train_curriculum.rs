//! Trains through a scaled-down curriculum, then evaluates the greedy policy.
//!
//! ```text
//! cargo run --release --example train_curriculum -- [scale] [seed] [workers]
//! ```

use dayahead::env::{EnvConfig, MarketEnv};
use dayahead::evaluation::{net_charge_by_price, summarize};
use dayahead::policy_gradient::{default_schedule, evaluate_policy, scale_schedule, train_curriculum, TrainerConfig};
use dayahead::profiles::synthesize_default;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scale: f64 = args.first().map_or(Ok(0.02), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(1), |s| s.parse())?;
    let workers: usize = args.get(2).map_or(Ok(1), |s| s.parse())?;

    let env = MarketEnv::new(synthesize_default(), EnvConfig::default())?;
    let stages = scale_schedule(&default_schedule(), scale);
    let config = TrainerConfig { seed, ..TrainerConfig::default() };

    let started = std::time::Instant::now();
    let mut last_stage = usize::MAX;
    let outcome = train_curriculum(&env, &stages, &config, workers, |row| {
        if row.stage != last_stage || row.batch % 20 == 0 {
            println!(
                "stage {} batch {:4} steps {:7} objective {:+.4} clip {:.3} value_loss {:.4} success {:.2}",
                row.stage, row.batch, row.timesteps, row.objective, row.clip_fraction, row.value_loss, row.success_rate
            );
            last_stage = row.stage;
        }
    })?;
    println!("trained {} steps in {:.1?}", outcome.position.timesteps, started.elapsed());

    let run = evaluate_policy(&outcome.params, &env, 1, true, seed)?;
    let summary = summarize(&run.hours)?;
    println!("hour  demand  supply   gap%  bound_gap%  price   soc  battery_net");
    for (h, g) in run.hours.iter().zip(&summary.bound_gaps) {
        println!(
            "{:4} {:7.1} {:7.1} {:6.2} {:10.2} {:6.1} {:5.0} {:+11.1}",
            h.hour,
            h.demand,
            h.supply,
            h.imbalance_gap().unwrap_or(f64::NAN),
            g,
            h.price,
            h.soc,
            h.battery_net_mwh
        );
    }
    let (cheap, dear) = net_charge_by_price(&run.hours, 6);
    println!(
        "imbalance<=2%: {:.1}%  <=6%: {:.1}%  bound<=10%: {:.1}%  max bound gap {:.2}%",
        100.0 * summary.fraction_imbalance_within(2.0),
        100.0 * summary.fraction_imbalance_within(6.0),
        100.0 * summary.fraction_bound_within(10.0),
        summary.max_bound_gap
    );
    println!("net charge: 6 cheapest hours {cheap:+.1} MWh, 6 dearest hours {dear:+.1} MWh");
    Ok(())
}
