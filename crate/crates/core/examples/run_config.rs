//! Prints the default run configuration as TOML and shows flag-style
//! overrides applied on top of a partial file.

use dayahead::config::RunConfig;

fn main() -> anyhow::Result<()> {
    let defaults = RunConfig::default();
    println!("{}", defaults.to_toml());

    let partial = "out_dir = \"runs/quick\"\n[curriculum]\nscale = 0.1\n[ledger]\nround_duration = 1.3054\nextra_confirm_rounds = 1\n";
    let config = RunConfig::parse(partial)?;
    let budgets: Vec<u64> = config.scaled_stages().iter().map(|s| s.timesteps).collect();
    println!("scaled budgets {budgets:?}");
    assert_eq!(RunConfig::parse(&config.to_toml())?, config);

    match RunConfig::parse("[trainer]\nlearning_rat = 0.1\n") {
        Err(e) => println!("typo rejected: {e}"),
        Ok(_) => unreachable!("unknown keys are rejected"),
    }
    Ok(())
}
