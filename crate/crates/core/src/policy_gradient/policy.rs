//! Squashed diagonal-Gaussian policy and value function.
//!
//! Pre-squash samples `u ~ N(mu(s), diag(exp(log_std))^2)`; the first three
//! action components pass through a sigmoid into [0, 1], the battery
//! component through tanh into [-1, 1]. Log-probabilities include the
//! change-of-variables correction of the squash.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::network::Mlp;
use crate::env::{ACTION_DIM, OBS_DIM};
use crate::market::DispatchAction;

const LOG_STD_MIN: f64 = -20.0;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub policy: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
}

/// One sampled decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub action: DispatchAction,
    /// Pre-squash Gaussian sample.
    pub raw: [f64; ACTION_DIM],
    pub log_prob: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps a pre-squash sample into the action box.
pub fn squash(raw: &[f64; ACTION_DIM]) -> DispatchAction {
    DispatchAction::new(sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2]), raw[3].tanh())
}

/// Pre-squash point that maps to `action`; components must lie strictly
/// inside the action box.
pub fn unsquash(action: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
    let logit = |p: f64| (p / (1.0 - p)).ln();
    [logit(action[0]), logit(action[1]), logit(action[2]), action[3].atanh()]
}

/// `log |d squash / d u|`, summed over components.
pub fn squash_log_jacobian(raw: &[f64; ACTION_DIM]) -> f64 {
    let mut total = 0.0;
    for &u in &raw[..3] {
        // log(s(u) (1 - s(u)))
        total += -softplus(-u) - softplus(u);
    }
    // log(1 - tanh(u)^2)
    let u = raw[3];
    total += 2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u));
    total
}

/// Diagonal Gaussian log-density of `raw` under `mean`, `log_std`.
pub fn gaussian_log_density(raw: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    raw.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&u, &m), &ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI
        })
        .sum()
}

/// Entropy of the pre-squash Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI).ln() + 0.5).sum()
}

impl PolicyParameters {
    /// `obs -> hidden -> hidden -> 4` policy and `obs -> hidden -> hidden -> 1`
    /// value network.
    pub fn init<R: Rng + ?Sized>(hidden: usize, init_log_std: f64, rng: &mut R) -> Self {
        Self::init_with_dims(OBS_DIM, hidden, init_log_std, rng)
    }

    pub fn init_with_dims<R: Rng + ?Sized>(obs_dim: usize, hidden: usize, init_log_std: f64, rng: &mut R) -> Self {
        let policy = Mlp::init(&[obs_dim, hidden, hidden, ACTION_DIM], 0.01, rng);
        let value = Mlp::init(&[obs_dim, hidden, hidden, 1], 1.0, rng);
        Self { policy, log_std: vec![init_log_std; ACTION_DIM], value }
    }

    pub fn len(&self) -> usize {
        self.policy.params().len() + self.log_std.len() + self.value.params().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Policy weights, log-stds, value weights, concatenated.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(self.policy.params());
        v.extend_from_slice(&self.log_std);
        v.extend_from_slice(self.value.params());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len());
        let p = self.policy.params().len();
        let s = self.log_std.len();
        self.policy.params_mut().copy_from_slice(&flat[..p]);
        self.log_std.copy_from_slice(&flat[p..p + s]);
        self.value.params_mut().copy_from_slice(&flat[p + s..]);
    }

    /// Applies `f` to every parameter slice together with the matching
    /// slice of a flat vector laid out like [`Self::flat`].
    pub fn zip_flat_mut(&mut self, flat: &[f64], mut f: impl FnMut(&mut f64, f64)) {
        let p = self.policy.params().len();
        let s = self.log_std.len();
        for (w, &g) in self.policy.params_mut().iter_mut().zip(&flat[..p]) {
            f(w, g);
        }
        for (w, &g) in self.log_std.iter_mut().zip(&flat[p..p + s]) {
            f(w, g);
        }
        for (w, &g) in self.value.params_mut().iter_mut().zip(&flat[p + s..]) {
            f(w, g);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.policy.params().iter().chain(&self.log_std).chain(self.value.params()).all(|v| v.is_finite())
    }

    pub fn mean(&self, obs: &[f64]) -> [f64; ACTION_DIM] {
        let out = self.policy.forward(obs);
        let mut m = [0.0; ACTION_DIM];
        m.copy_from_slice(&out);
        m
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.value.forward(obs)[0]
    }

    /// Draws an action. With `deterministic` the squashed mean is returned
    /// (the zero-variance limit).
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> ActionSample {
        let mean = self.mean(obs);
        let mut raw = mean;
        if !deterministic {
            for (d, r) in raw.iter_mut().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                *r += self.log_std[d].max(LOG_STD_MIN).exp() * eps;
            }
        }
        ActionSample { action: squash(&raw), raw, log_prob: self.log_prob_raw(obs, &raw) }
    }

    /// `log pi(a | s)` for the action obtained by squashing `raw`.
    pub fn log_prob_raw(&self, obs: &[f64], raw: &[f64; ACTION_DIM]) -> f64 {
        let mean = self.mean(obs);
        gaussian_log_density(raw, &mean, &self.log_std) - squash_log_jacobian(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> PolicyParameters {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = PolicyParameters::init(16, -0.5, &mut rng);
        p.policy.output_bias_mut().copy_from_slice(&[0.5, -0.3, 1.2, -0.4]);
        p
    }

    #[test]
    fn deterministic_mode_is_squashed_mean() {
        let p = params();
        let obs = [0.1; OBS_DIM];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = p.sample_action(&obs, true, &mut rng);
        assert_eq!(s.action, squash(&p.mean(&obs)));
        let a = s.action;
        assert!((0.0..=1.0).contains(&a.conventional_frac) && (-1.0..=1.0).contains(&a.battery_frac));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let p = params();
        let obs = [0.2; OBS_DIM];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5).map(|_| p.sample_action(&obs, false, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn monte_carlo_mean_within_three_standard_errors() {
        let p = params();
        let obs = [0.3; OBS_DIM];
        let mean = p.mean(&obs);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000;
        let mut sums = [0.0; ACTION_DIM];
        for _ in 0..n {
            let s = p.sample_action(&obs, false, &mut rng);
            for d in 0..ACTION_DIM {
                sums[d] += s.raw[d];
            }
        }
        for d in 0..ACTION_DIM {
            let emp = sums[d] / n as f64;
            let se = p.log_std[d].exp() / (n as f64).sqrt();
            assert!((emp - mean[d]).abs() < 3.0 * se, "dim {d}: {emp} vs {}", mean[d]);
        }
    }

    #[test]
    fn log_jacobian_matches_direct_formula() {
        for raw in [[0.3, -1.2, 2.0, 0.7], [-3.0, 4.0, 0.0, -1.5]] {
            let s = |x: f64| 1.0 / (1.0 + (-x).exp());
            let direct: f64 = raw[..3].iter().map(|&u| (s(u) * (1.0 - s(u))).ln()).sum::<f64>()
                + (1.0 - raw[3].tanh().powi(2)).ln();
            assert!((direct - squash_log_jacobian(&raw)).abs() < 1e-12);
        }
        // Stays finite deep in saturation.
        assert!(squash_log_jacobian(&[60.0, -60.0, 60.0, 40.0]).is_finite());
    }

    #[test]
    fn unsquash_inverts_squash() {
        let raw = [1.3, -0.4, 0.0, -0.8];
        let back = unsquash(&squash(&raw).to_array());
        for d in 0..ACTION_DIM {
            assert!((back[d] - raw[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_round_trip() {
        let p = params();
        let mut q = p.clone();
        q.set_flat(&vec![0.0; p.len()]);
        q.set_flat(&p.flat());
        assert_eq!(p, q);
    }
}
