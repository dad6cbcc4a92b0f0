//! Ledger metrics: the 203-transaction benchmark, the one-round latency
//! example, and the double-spend guard.

use dayahead::cli::cmd_bench_ledger;
use dayahead::ledger::{Ledger, LedgerConfig};

fn main() -> anyhow::Result<()> {
    let timing = LedgerConfig { round_duration: 1.3054, extra_confirm_rounds: 1, ..Default::default() };
    let report = cmd_bench_ledger(&timing, 203, 0)?;
    println!(
        "203 settlements: mean latency {:.4} s, throughput {:.2} txn/s",
        report.avg_latency_s, report.throughput_txn_per_s
    );
    println!("latency x throughput = {:.6}", report.avg_latency_s * report.throughput_txn_per_s);

    let mut ledger = Ledger::new(LedgerConfig { extra_confirm_rounds: 1, ..Default::default() })?;
    ledger.register("load")?;
    ledger.register("generator_pool")?;
    let first = ledger.submit_settlement("load", "generator_pool", 7, 42.0, 500.0);
    // Same hour, same parties: a second settlement of the same trade.
    ledger.submit_settlement("load", "generator_pool", 7, 42.0, 500.0);
    // Unregistered receiver.
    ledger.submit_settlement("load", "mallory", 8, 42.0, 10.0);
    while ledger.pending() > 0 {
        for (id, outcome) in ledger.advance_round() {
            println!("txn {id}: {outcome}");
        }
    }
    println!("latency of txn {first} with 4 s rounds: {} s", ledger.transaction_latency(first)?);
    println!("state hash {}", ledger.state_hash().iter().map(|b| format!("{b:02x}")).collect::<String>());
    Ok(())
}
