//! One trained day settled hour by hour on the simulated ledger, including
//! a deliberately duplicated settlement.

use dayahead::cli::{cmd_simulate_day, cmd_train};
use dayahead::config::RunConfig;

fn main() -> anyhow::Result<()> {
    let mut config = RunConfig::default();
    config.curriculum.scale = 0.05;
    config.out_dir = std::env::temp_dir().join("dayahead-simulate-day");
    let trained = cmd_train(&config)?;

    let (summary, report) = cmd_simulate_day(&config, &trained.checkpoint_path, Some(7))?;
    println!("hours simulated: {}", summary.hours.len());
    println!("settlements submitted {} confirmed {} rejected {:?}", report.submitted, report.confirmed, report.rejected);
    println!("mean latency {:.2} s", report.avg_latency_s);
    println!("hour  price   timestamp  txn");
    for e in report.global_state.iter().take(5) {
        println!("{:4} {:6.2} {:11.1} {:4}", e.hour, e.price, e.timestamp, e.writer_txn);
    }
    println!("... {} global-state entries in {}", report.global_state.len(), config.out_dir.display());
    Ok(())
}
