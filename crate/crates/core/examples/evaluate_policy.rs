//! Train briefly, checkpoint, reload, and write the evaluation CSVs.
//!
//! ```text
//! cargo run --release --example evaluate_policy -- [out_dir]
//! ```

use std::path::PathBuf;

use dayahead::config::RunConfig;
use dayahead::evaluation::{emit_reports, summarize};
use dayahead::ledger::LedgerReport;
use dayahead::policy_gradient::{evaluate_policy, train_curriculum, Checkpoint};

fn main() -> anyhow::Result<()> {
    let out: PathBuf =
        std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("dayahead-evaluate"), PathBuf::from);
    let mut config = RunConfig::default();
    config.curriculum.scale = 0.05;
    let env = config.build_env()?;

    let trained = train_curriculum(&env, &config.scaled_stages(), &config.trainer, 1, |_| {})?;
    let path = out.join("checkpoint.json");
    Checkpoint::new(config.trainer.clone(), trained.position, trained.params).save(&path)?;

    let checkpoint = Checkpoint::load(&path)?;
    let random = evaluate_policy(&checkpoint.params, &env, 3, false, 5)?;
    let greedy = evaluate_policy(&checkpoint.params, &env, 3, true, 5)?;
    for (name, run) in [("sampled", &random), ("greedy", &greedy)] {
        let s = summarize(&run.hours)?;
        println!(
            "{name:8} hours {:3}  mean gap {:6.2}%  <=2%: {:5.1}%  bound <=10%: {:5.1}%",
            s.hours.len(),
            s.mean_imbalance_gap,
            100.0 * s.frac_imbalance_within,
            100.0 * s.frac_bound_within
        );
    }
    emit_reports(&summarize(&greedy.hours)?, &LedgerReport::empty(), &out)?;
    let mut files: Vec<String> = std::fs::read_dir(&out)?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    files.sort();
    println!("wrote {} files to {}: {}", files.len(), out.display(), files.join(", "));
    Ok(())
}
