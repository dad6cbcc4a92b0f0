//! Day-ahead energy trading: an hourly market environment with renewables,
//! conventional generation and a battery; a PPO agent trained through a
//! staged curriculum; a merit-order cost bound; and a simulated settlement
//! ledger with latency and throughput metrics.
//!
//! The `examples/` directory walks through each piece.

pub mod cli;
pub mod config;
pub mod dispatch_bound;
pub mod env;
pub mod evaluation;
pub mod ledger;
pub mod market;
pub mod policy_gradient;
pub mod profiles;
