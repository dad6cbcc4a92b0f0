//! Checks the hand-written PPO gradient against central finite differences
//! on a tiny network.

use dayahead::env::ACTION_DIM;
use dayahead::policy_gradient::{
    objective_and_grad, prepare_samples, PolicyParameters, TrainerConfig, Trajectory, TrajectoryStep,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let obs_dim = 6;
    let params = PolicyParameters::init_with_dims(obs_dim, 4, -0.3, &mut rng);
    let old = params.clone();
    let mut steps = Vec::new();
    for _ in 0..5 {
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = old.sample_action(&obs, false, &mut rng);
        steps.push(TrajectoryStep {
            value_estimate: old.value(&obs),
            obs,
            raw_action: s.raw,
            action: s.action,
            // Pretend the data came from a slightly different policy so
            // some ratios sit outside the clip range.
            log_prob_old: s.log_prob + rng.random_range(-0.3..0.3),
            reward: rng.random_range(-1.0..1.0),
        });
    }
    let batch = vec![Trajectory { steps, ..Default::default() }];
    let config = TrainerConfig { entropy_coeff: 0.01, ..TrainerConfig::default() };
    let samples = prepare_samples(&batch, config.gamma);
    let (stats, grad) = objective_and_grad(&params, &samples, &config, 1);
    println!("objective {:.6}  clip fraction {:.2}", stats.objective, stats.clip_fraction);

    let flat = params.flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut p = params.clone();
        let mut plus = flat.clone();
        plus[i] += h;
        p.set_flat(&plus);
        let up = objective_and_grad(&p, &samples, &config, 1).0.objective;
        let mut minus = flat.clone();
        minus[i] -= h;
        p.set_flat(&minus);
        let down = objective_and_grad(&p, &samples, &config, 1).0.objective;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
        worst = worst.max(if (fd - grad[i]).abs() < 1e-9 { 0.0 } else { rel });
    }
    println!("{} parameters ({} action dims), worst relative error {worst:.2e}", flat.len(), ACTION_DIM);
}
