use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::CurriculumPosition;
use super::policy::{unsquash, PolicyParameters};
use super::ppo::{ppo_update, Optimizer, TrainerConfig, Trajectory, TrajectoryStep, UpdateStats};
use super::{mix_seed, TrainError};
use crate::env::{CurriculumTargets, EnvError, MarketEnv, StepInfo};
use crate::evaluation::HourlyEvaluation;

pub const TRAINING_LOG_HEADER: &str = "stage,batch,timesteps,objective,clip_fraction,value_loss,success_rate";

/// Episodes remembered for the rolling success rate.
const SUCCESS_WINDOW: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumStage {
    pub imbalance_gap_target_pct: f64,
    pub best_bound_gap_target_pct: f64,
    pub timesteps: u64,
}

impl CurriculumStage {
    pub fn targets(&self) -> CurriculumTargets {
        CurriculumTargets {
            imbalance_gap_target_pct: self.imbalance_gap_target_pct,
            best_bound_gap_target_pct: self.best_bound_gap_target_pct,
        }
    }
}

/// Five stages of tightening imbalance / cost targets, 330k steps in total.
pub fn default_schedule() -> Vec<CurriculumStage> {
    [(40.0, 40.0, 40_000), (20.0, 30.0, 50_000), (10.0, 20.0, 60_000), (5.0, 10.0, 80_000), (2.0, 10.0, 100_000)]
        .into_iter()
        .map(|(i, b, t)| CurriculumStage { imbalance_gap_target_pct: i, best_bound_gap_target_pct: b, timesteps: t })
        .collect()
}

/// Multiplies every stage budget by `factor` (rounded, at least one step).
pub fn scale_schedule(stages: &[CurriculumStage], factor: f64) -> Vec<CurriculumStage> {
    stages
        .iter()
        .map(|s| CurriculumStage { timesteps: ((s.timesteps as f64 * factor).round() as u64).max(1), ..*s })
        .collect()
}

/// Targets must be positive and non-increasing, budgets non-decreasing.
pub fn validate_schedule(stages: &[CurriculumStage]) -> Result<(), TrainError> {
    if stages.is_empty() {
        return Err(TrainError::Config("curriculum has no stages".into()));
    }
    for s in stages {
        s.targets().validate()?;
        if s.timesteps == 0 {
            return Err(TrainError::Config("stage timesteps must be positive".into()));
        }
    }
    for w in stages.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.imbalance_gap_target_pct > a.imbalance_gap_target_pct
            || b.best_bound_gap_target_pct > a.best_bound_gap_target_pct
            || b.timesteps < a.timesteps
        {
            return Err(TrainError::Config(format!(
                "stages must tighten targets and not shrink budgets: {a:?} -> {b:?}"
            )));
        }
    }
    Ok(())
}

/// Plays one episode from `reset_seed` until done.
pub fn run_episode(
    params: &PolicyParameters,
    env: &mut MarketEnv,
    reset_seed: u64,
    deterministic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Trajectory, Vec<StepInfo>), EnvError> {
    env.reset(reset_seed);
    let mut traj = Trajectory::default();
    let mut infos = Vec::with_capacity(24);
    loop {
        let obs = env.observe().to_vec();
        let sample = params.sample_action(&obs, deterministic, rng);
        let value_estimate = params.value(&obs);
        let result = env.step(sample.action)?;
        traj.steps.push(TrajectoryStep {
            obs,
            raw_action: sample.raw,
            action: sample.action,
            log_prob_old: sample.log_prob,
            reward: result.reward,
            value_estimate,
        });
        if result.done {
            traj.success = result.info.episode_success.unwrap_or(false);
            traj.mean_gap_pct = result.info.episode_mean_gap_pct.unwrap_or(f64::NAN);
            infos.push(result.info);
            return Ok((traj, infos));
        }
        infos.push(result.info);
    }
}

/// Collects `count` stochastic trajectories. Episode `first_episode + i`
/// gets its own reset seed and action stream, so the result does not depend
/// on how many worker threads run the collection.
pub fn collect_batch(
    params: &PolicyParameters,
    env: &MarketEnv,
    first_episode: u64,
    count: usize,
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<Trajectory>, TrainError> {
    let one = |i: usize| -> Result<Trajectory, EnvError> {
        let episode = first_episode + i as u64;
        let mut env = env.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, episode, 1));
        run_episode(params, &mut env, mix_seed(seed, episode, 0), false, &mut rng).map(|(t, _)| t)
    };
    let result: Result<Vec<_>, EnvError> = match pool {
        Some(pool) => pool.install(|| (0..count).into_par_iter().map(one).collect()),
        None => (0..count).map(one).collect(),
    };
    Ok(result?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogRow {
    pub stage: usize,
    pub batch: usize,
    /// Cumulative environment steps.
    pub timesteps: u64,
    pub objective: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<TrainingLogRow>,
    /// Imbalance target handed to the environment at the start of each stage.
    pub stage_targets: Vec<CurriculumTargets>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{TRAINING_LOG_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:.9},{:.6},{:.9},{:.6}\n",
                r.stage, r.batch, r.timesteps, r.objective, r.clip_fraction, r.value_loss, r.success_rate
            ));
        }
        s
    }

    pub fn total_timesteps(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.timesteps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub params: PolicyParameters,
    pub log: TrainingLog,
    pub position: CurriculumPosition,
}

/// Trains through `stages` in order, carrying parameters across stages.
///
/// Stage `s` ends once the cumulative step count reaches the sum of the
/// budgets up to and including `s`, so the total overshoots the schedule by
/// less than one batch. `workers > 1` parallelises collection only; results
/// are identical for any worker count.
pub fn train_curriculum(
    env: &MarketEnv,
    stages: &[CurriculumStage],
    config: &TrainerConfig,
    workers: usize,
    mut on_batch: impl FnMut(&TrainingLogRow),
) -> Result<TrainingOutcome, TrainError> {
    config.validate()?;
    validate_schedule(stages)?;
    let mut env = env.clone();
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, u64::MAX, 7));
    let mut params = PolicyParameters::init(config.hidden_size, config.init_log_std, &mut init_rng);
    params.policy.output_bias_mut().copy_from_slice(&unsquash(&config.initial_action));
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, params.len());
    let mut update_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, u64::MAX, 8));
    let pool = if workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| TrainError::Config(e.to_string()))?,
        )
    } else {
        None
    };

    let total_budget: u64 = stages.iter().map(|s| s.timesteps).sum();
    let mut log = TrainingLog::default();
    let mut total_steps: u64 = 0;
    let mut episode: u64 = 0;
    let mut cumulative_budget: u64 = 0;
    for (stage_idx, stage) in stages.iter().enumerate() {
        env.set_targets(stage.targets())?;
        log.stage_targets.push(env.targets());
        cumulative_budget += stage.timesteps;
        let mut recent: VecDeque<bool> = VecDeque::with_capacity(SUCCESS_WINDOW);
        let mut batch_idx = 0;
        while total_steps < cumulative_budget {
            let batch = collect_batch(&params, &env, episode, config.batch_trajectories, config.seed, pool.as_ref())?;
            episode += batch.len() as u64;
            if config.anneal_learning_rate {
                let progress = total_steps as f64 / total_budget as f64;
                optimizer.set_learning_rate(config.learning_rate * (1.0 - progress).max(0.0));
            }
            total_steps += batch.iter().map(|t| t.len() as u64).sum::<u64>();
            for t in &batch {
                if recent.len() == SUCCESS_WINDOW {
                    recent.pop_front();
                }
                recent.push_back(t.success);
            }
            let (next, stats): (PolicyParameters, UpdateStats) =
                ppo_update(&params, &mut optimizer, &batch, config, &mut update_rng)?;
            params = next;
            let row = TrainingLogRow {
                stage: stage_idx,
                batch: batch_idx,
                timesteps: total_steps,
                objective: stats.objective,
                clip_fraction: stats.clip_fraction,
                value_loss: stats.value_loss,
                success_rate: recent.iter().filter(|&&s| s).count() as f64 / recent.len() as f64,
            };
            on_batch(&row);
            log.rows.push(row);
            batch_idx += 1;
        }
    }
    Ok(TrainingOutcome {
        params,
        log,
        position: CurriculumPosition { stage: stages.len(), timesteps: total_steps, episodes: episode },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub hours: Vec<HourlyEvaluation>,
    pub episode_returns: Vec<f64>,
}

/// Plays `episodes` full days with early stopping disabled. Episode `e`
/// resets with a seed derived from `seed` and `e`.
pub fn evaluate_policy(
    params: &PolicyParameters,
    env: &MarketEnv,
    episodes: usize,
    deterministic: bool,
    seed: u64,
) -> Result<EvaluationSummary, EnvError> {
    let mut env = env.clone();
    env.set_early_stop(false);
    let mut hours = Vec::with_capacity(24 * episodes);
    let mut episode_returns = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, e as u64, 3));
        let (traj, infos) = run_episode(params, &mut env, mix_seed(seed, e as u64, 2), deterministic, &mut rng)?;
        episode_returns.push(traj.rewards().iter().sum());
        for info in infos {
            let d = &info.dispatch;
            hours.push(HourlyEvaluation {
                episode: e,
                hour: info.hour,
                demand: info.effective_demand,
                supply: d.supply_total_mwh,
                price: info.price,
                actual_cost: info.supply_cost,
                best_bound: info.best_bound,
                soc: info.soc,
                solar_mwh: d.solar_mwh,
                wind_mwh: d.wind_mwh,
                conventional_mwh: d.conventional_mwh,
                battery_net_mwh: d.battery_net_mwh(),
            });
        }
    }
    Ok(EvaluationSummary { hours, episode_returns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::profiles::synthesize_default;

    fn env() -> MarketEnv {
        MarketEnv::new(synthesize_default(), EnvConfig::default()).unwrap()
    }

    #[test]
    fn default_schedule_values() {
        let s = default_schedule();
        let rows: Vec<(f64, f64, u64)> =
            s.iter().map(|s| (s.imbalance_gap_target_pct, s.best_bound_gap_target_pct, s.timesteps)).collect();
        assert_eq!(
            rows,
            vec![(40.0, 40.0, 40_000), (20.0, 30.0, 50_000), (10.0, 20.0, 60_000), (5.0, 10.0, 80_000), (2.0, 10.0, 100_000)]
        );
        assert!(validate_schedule(&s).is_ok());
        let tenth = scale_schedule(&s, 0.1);
        assert_eq!(tenth.iter().map(|s| s.timesteps).collect::<Vec<_>>(), vec![4000, 5000, 6000, 8000, 10000]);
        assert_eq!(tenth[4].targets(), s[4].targets());
    }

    #[test]
    fn schedule_validation() {
        let mut s = default_schedule();
        s.swap(0, 1);
        assert!(validate_schedule(&s).is_err());
        assert!(validate_schedule(&[]).is_err());
    }

    #[test]
    fn collection_is_worker_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = PolicyParameters::init(8, -0.5, &mut rng);
        let env = env();
        let serial = collect_batch(&params, &env, 10, 6, 42, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let parallel = collect_batch(&params, &env, 10, 6, 42, Some(&pool)).unwrap();
        assert_eq!(serial, parallel);
        assert!(serial.iter().all(|t| t.len() <= 24 && !t.is_empty()));
    }

    #[test]
    fn evaluation_shape_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = PolicyParameters::init(8, -0.5, &mut rng);
        let env = env();
        let a = evaluate_policy(&params, &env, 2, true, 5).unwrap();
        let b = evaluate_policy(&params, &env, 2, true, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hours.len(), 48);
    }

    #[test]
    fn tiny_training_run_accounts_budget() {
        let stages = scale_schedule(&default_schedule(), 0.01);
        let config = TrainerConfig { hidden_size: 8, batch_trajectories: 4, ..Default::default() };
        let out = train_curriculum(&env(), &stages, &config, 1, |_| {}).unwrap();
        let budget: u64 = stages.iter().map(|s| s.timesteps).sum();
        let total = out.log.total_timesteps();
        assert!(total >= budget && total < budget + 4 * 24, "{total} vs {budget}");
        assert_eq!(out.log.stage_targets, stages.iter().map(CurriculumStage::targets).collect::<Vec<_>>());
        assert!(out.params.all_finite());
        assert!(out.log.to_csv().starts_with(TRAINING_LOG_HEADER));
    }
}
