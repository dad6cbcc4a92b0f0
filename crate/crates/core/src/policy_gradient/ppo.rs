//! Returns, trajectory likelihoods, and the clipped-surrogate update.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{gaussian_entropy, squash_log_jacobian, PolicyParameters};
use super::TrainError;
use crate::env::ACTION_DIM;
use crate::market::DispatchAction;

/// Range the learned log-standard-deviations are projected onto.
pub const LOG_STD_BOUNDS: (f64, f64) = (-5.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Clipped probability-ratio surrogate with a learned baseline.
    PpoClip,
    /// Log-likelihood weighted by the raw trajectory return.
    Reinforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub batch_trajectories: usize,
    pub epochs_per_batch: usize,
    pub minibatch_size: usize,
    pub hidden_size: usize,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub max_grad_norm: f64,
    pub init_log_std: f64,
    /// Decays the learning rate linearly to zero over the whole schedule.
    pub anneal_learning_rate: bool,
    /// Squashed action the untrained policy starts from: solar, wind and
    /// conventional fractions in (0, 1), battery in (-1, 1).
    pub initial_action: [f64; ACTION_DIM],
    pub objective: Objective,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            learning_rate: 5e-3,
            clip_epsilon: 0.2,
            batch_trajectories: 16,
            epochs_per_batch: 10,
            minibatch_size: 64,
            hidden_size: 64,
            entropy_coeff: 0.0,
            value_coeff: 0.5,
            max_grad_norm: 0.5,
            init_log_std: -0.5,
            anneal_learning_rate: true,
            initial_action: [0.95, 0.95, 0.3, 0.0],
            objective: Objective::PpoClip,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be > 0");
        }
        if self.batch_trajectories == 0 || self.epochs_per_batch == 0 || self.minibatch_size == 0 {
            return bad("batch_trajectories, epochs_per_batch and minibatch_size must be >= 1");
        }
        if self.hidden_size == 0 {
            return bad("hidden_size must be >= 1");
        }
        if !(self.entropy_coeff >= 0.0 && self.value_coeff >= 0.0 && self.max_grad_norm >= 0.0) {
            return bad("entropy_coeff, value_coeff and max_grad_norm must be >= 0");
        }
        if !self.init_log_std.is_finite() {
            return bad("init_log_std must be finite");
        }
        let a = &self.initial_action;
        if !(a[..3].iter().all(|&f| f > 0.0 && f < 1.0) && a[3] > -1.0 && a[3] < 1.0) {
            return bad("initial_action must lie strictly inside the action box");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub obs: Vec<f64>,
    pub raw_action: [f64; ACTION_DIM],
    pub action: DispatchAction,
    pub log_prob_old: f64,
    pub reward: f64,
    pub value_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub success: bool,
    pub mean_gap_pct: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// `sum_i r_i * gamma^i`
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Discounted return from every step to the end of the episode.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Sum of per-step action log-probabilities under `params`. Transition and
/// initial-state factors carry no parameter dependence and are omitted.
pub fn trajectory_log_prob(params: &PolicyParameters, trajectory: &Trajectory) -> f64 {
    trajectory.steps.iter().map(|s| params.log_prob_raw(&s.obs, &s.raw_action)).sum()
}

/// Per-step training sample derived from a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub raw_action: [f64; ACTION_DIM],
    pub log_prob_old: f64,
    pub advantage: f64,
    pub return_to_go: f64,
    /// Full discounted return of the owning trajectory.
    pub episode_return: f64,
}

/// Builds samples with baseline advantages, normalised over the batch unless
/// their variance is below 1e-8.
pub fn prepare_samples(batch: &[Trajectory], gamma: f64) -> Vec<Sample> {
    let mut samples = Vec::with_capacity(batch.iter().map(Trajectory::len).sum());
    for traj in batch {
        let rewards = traj.rewards();
        let rtg = returns_to_go(&rewards, gamma);
        let ep_return = rtg.first().copied().unwrap_or(0.0);
        for (step, g) in traj.steps.iter().zip(rtg) {
            samples.push(Sample {
                obs: step.obs.clone(),
                raw_action: step.raw_action,
                log_prob_old: step.log_prob_old,
                advantage: g - step.value_estimate,
                return_to_go: g,
                episode_return: ep_return,
            });
        }
    }
    let n = samples.len() as f64;
    if n > 0.0 {
        let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
        if var >= 1e-8 {
            let std = var.sqrt();
            for s in &mut samples {
                s.advantage = (s.advantage - mean) / std;
            }
        }
    }
    samples
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveStats {
    /// Total objective: policy term minus weighted value loss plus entropy.
    pub objective: f64,
    pub policy_objective: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Total objective over `samples` and its gradient with respect to every
/// parameter, laid out like [`PolicyParameters::flat`].
///
/// `reinforce_episodes` is the number of trajectories the samples came
/// from; it normalises the [`Objective::Reinforce`] sum.
pub fn objective_and_grad(
    params: &PolicyParameters,
    samples: &[Sample],
    config: &TrainerConfig,
    reinforce_episodes: usize,
) -> (ObjectiveStats, Vec<f64>) {
    let n_policy = params.policy.params().len();
    let n_value = params.value.params().len();
    let mut g_policy = vec![0.0; n_policy];
    let mut g_log_std = vec![0.0; ACTION_DIM];
    let mut g_value = vec![0.0; n_value];
    let mut stats = ObjectiveStats::default();
    if samples.is_empty() {
        return (stats, [g_policy, g_log_std, g_value].concat());
    }

    let n = samples.len() as f64;
    let eps = config.clip_epsilon;
    let sigma: Vec<f64> = params.log_std.iter().map(|l| l.exp()).collect();
    let policy_norm = match config.objective {
        Objective::PpoClip => n,
        Objective::Reinforce => reinforce_episodes.max(1) as f64,
    };

    let mut clipped = 0usize;
    for s in samples {
        let cache = params.policy.forward_cached(&s.obs);
        let mean = cache.output();
        let mut log_density = 0.0;
        let mut z = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            z[d] = (s.raw_action[d] - mean[d]) / sigma[d];
            log_density += -0.5 * z[d] * z[d] - params.log_std[d] - 0.918_938_533_204_672_8;
        }
        let log_prob = log_density - squash_log_jacobian(&s.raw_action);

        // Coefficient multiplying d(log_prob)/d(theta) in the objective.
        let coeff = match config.objective {
            Objective::PpoClip => {
                let ratio = (log_prob - s.log_prob_old).exp();
                let unclipped = ratio * s.advantage;
                let clipped_term = ratio.clamp(1.0 - eps, 1.0 + eps) * s.advantage;
                stats.mean_ratio += ratio / n;
                if unclipped <= clipped_term {
                    stats.policy_objective += unclipped / policy_norm;
                    ratio * s.advantage
                } else {
                    clipped += 1;
                    stats.policy_objective += clipped_term / policy_norm;
                    0.0
                }
            }
            Objective::Reinforce => {
                stats.mean_ratio += (log_prob - s.log_prob_old).exp() / n;
                stats.policy_objective += log_prob * s.episode_return / policy_norm;
                s.episode_return
            }
        };

        if coeff != 0.0 {
            let mut d_mean = [0.0; ACTION_DIM];
            for d in 0..ACTION_DIM {
                d_mean[d] = coeff * z[d] / sigma[d] / policy_norm;
                g_log_std[d] += coeff * (z[d] * z[d] - 1.0) / policy_norm;
            }
            params.policy.backward(&cache, &d_mean, &mut g_policy);
        }

        let vcache = params.value.forward_cached(&s.obs);
        let err = vcache.output()[0] - s.return_to_go;
        stats.value_loss += err * err / n;
        let d_value = -2.0 * config.value_coeff * err / n;
        params.value.backward(&vcache, &[d_value], &mut g_value);
    }

    stats.entropy = gaussian_entropy(&params.log_std);
    for g in &mut g_log_std {
        *g += config.entropy_coeff;
    }
    stats.clip_fraction = clipped as f64 / n;
    stats.objective = stats.policy_objective - config.value_coeff * stats.value_loss + config.entropy_coeff * stats.entropy;
    (stats, [g_policy, g_log_std, g_value].concat())
}

/// First-order ascent optimiser over the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, learning_rate: f64, n_params: usize) -> Self {
        Self { kind, learning_rate, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.learning_rate = learning_rate;
    }

    /// `theta += lr * step(grad)`; the gradient points uphill.
    pub fn ascend(&mut self, params: &mut PolicyParameters, grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.learning_rate;
                params.zip_flat_mut(grad, |w, g| *w += lr * g);
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let b1t = 1.0 - Self::BETA1.powi(self.t as i32);
                let b2t = 1.0 - Self::BETA2.powi(self.t as i32);
                let mut step = vec![0.0; grad.len()];
                for i in 0..grad.len() {
                    self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
                    self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / b1t;
                    let v_hat = self.v[i] / b2t;
                    step[i] = self.learning_rate * m_hat / (v_hat.sqrt() + Self::EPS);
                }
                params.zip_flat_mut(&step, |w, s| *w += s);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub objective: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub gradient_steps: usize,
}

/// Runs `epochs_per_batch` passes of minibatch gradient ascent over the
/// batch. Returns new parameters; on a non-finite gradient nothing is
/// committed, neither to the parameters nor to the optimiser state.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &PolicyParameters,
    optimizer: &mut Optimizer,
    batch: &[Trajectory],
    config: &TrainerConfig,
    rng: &mut R,
) -> Result<(PolicyParameters, UpdateStats), TrainError> {
    if batch.is_empty() || batch.iter().all(Trajectory::is_empty) {
        return Err(TrainError::EmptyBatch);
    }
    let samples = prepare_samples(batch, config.gamma);
    let mut work = params.clone();
    let mut opt = optimizer.clone();
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for _ in 0..config.epochs_per_batch {
        let chunks: Vec<Vec<usize>> = match config.objective {
            Objective::PpoClip => {
                order.shuffle(rng);
                order.chunks(config.minibatch_size).map(<[usize]>::to_vec).collect()
            }
            Objective::Reinforce => vec![order.clone()],
        };
        for idx in chunks {
            let mb: Vec<Sample> = idx.iter().map(|&i| samples[i].clone()).collect();
            let (s, mut grad) = objective_and_grad(&work, &mb, config, batch.len());
            if !grad.iter().all(|g| g.is_finite()) || !s.objective.is_finite() {
                return Err(TrainError::NonFiniteGradient);
            }
            if config.max_grad_norm > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > config.max_grad_norm {
                    let k = config.max_grad_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= k);
                }
            }
            opt.ascend(&mut work, &grad);
            for ls in &mut work.log_std {
                *ls = ls.clamp(LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1);
            }
            stats.objective += s.objective;
            stats.mean_ratio += s.mean_ratio;
            stats.clip_fraction += s.clip_fraction;
            stats.value_loss += s.value_loss;
            stats.entropy += s.entropy;
            stats.gradient_steps += 1;
        }
    }
    if !work.all_finite() {
        return Err(TrainError::NonFiniteGradient);
    }
    let k = stats.gradient_steps as f64;
    stats.objective /= k;
    stats.mean_ratio /= k;
    stats.clip_fraction /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    *optimizer = opt;
    Ok((work, stats))
}
