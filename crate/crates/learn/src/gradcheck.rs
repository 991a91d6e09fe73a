//! Central finite-difference check of every loss gradient on toy networks.

use nalgebra::DMatrix;
use rand::Rng;

use crate::loss::{
    a2c_actor_head, bit_log_prob, dqn_head, mse_critic_head, ppo_actor_head, ppo_critic_head, through, HeadLoss,
    PolicyTargets, ValueTargets,
};
use crate::net::Mlp;
use crate::LearnError;

pub const FD_STEP: f64 = 1e-5;

/// Largest relative error per loss, `|fd - g| / max(|fd|, |g|)` over the
/// whole gradient vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub ppo_actor: f64,
    pub ppo_critic: f64,
    pub a2c_actor: f64,
    pub a2c_critic: f64,
    pub dqn: f64,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        [
            self.ppo_actor,
            self.ppo_critic,
            self.a2c_actor,
            self.a2c_critic,
            self.dqn,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Relative error between the analytic gradient of `head` through `net`
/// and central differences of the loss.
pub fn relative_error(
    net: &Mlp,
    inputs: &DMatrix<f64>,
    head: impl Fn(&DMatrix<f64>) -> Result<HeadLoss, LearnError>,
) -> Result<f64, LearnError> {
    let mut rng = freshedge_core::rng::stream(0, "gradcheck");
    let (_, g) = through(net, inputs, 0.0, &mut rng, &head)?;
    let g = g.flat();
    let base = net.flat();
    let mut probe = net.clone();
    let mut loss_at = |p: &[f64]| -> Result<f64, LearnError> {
        probe.set_flat(p)?;
        Ok(head(&probe.forward(inputs)?)?.loss)
    };
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    let mut p = base.clone();
    for k in 0..base.len() {
        p[k] = base[k] + FD_STEP;
        let up = loss_at(&p)?;
        p[k] = base[k] - FD_STEP;
        let down = loss_at(&p)?;
        p[k] = base[k];
        let fd = (up - down) / (2.0 * FD_STEP);
        diff += (fd - g[k]).powi(2);
        scale = scale.max(fd * fd).max(g[k] * g[k]);
    }
    // norm of the difference against the largest component of either side
    Ok(diff.sqrt() / scale.sqrt().max(f64::MIN_POSITIVE))
}

/// Random two-layer networks and batches for one seed, with old policies
/// and old values perturbed so both clip branches occur.
pub fn check_seed(seed: u64) -> Result<GradReport, LearnError> {
    let mut rng = freshedge_core::rng::stream(seed, "gradcheck-data");
    let (d, a, b) = (4, 3, 6);
    let actor = Mlp::new(&[d, 5, a], 1.0, &mut rng);
    let critic = Mlp::new(&[d, 5, 1], 1.0, &mut rng);
    let qnet = Mlp::new(&[d, 5, 2 * a], 1.0, &mut rng);
    let inputs = DMatrix::from_fn(d, b, |_, _| rng.random_range(-1.5..1.5));
    let logits = actor.forward(&inputs)?;
    let bits: Vec<Vec<bool>> = (0..b).map(|_| (0..a).map(|_| rng.random_bool(0.5)).collect()).collect();
    let policy = PolicyTargets {
        old_log_probs: (0..b)
            .map(|c| {
                (0..a)
                    .map(|r| bit_log_prob(logits[(r, c)], bits[c][r]) + rng.random_range(-0.4..0.4))
                    .collect()
            })
            .collect(),
        bits: bits.clone(),
        advantages: (0..b).map(|_| rng.random_range(-2.0..2.0)).collect(),
        active: (0..b).map(|_| (0..a).map(|_| rng.random_bool(0.8)).collect()).collect(),
    };
    let values = critic.forward(&inputs)?;
    let value = ValueTargets {
        old_values: (0..b).map(|c| values[(0, c)] + rng.random_range(-0.4..0.4)).collect(),
        targets: (0..b).map(|_| rng.random_range(-2.0..2.0)).collect(),
    };
    let ys: Vec<f64> = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
    Ok(GradReport {
        ppo_actor: relative_error(&actor, &inputs, |o| ppo_actor_head(o, &policy, 0.2, 0.01))?,
        ppo_critic: relative_error(&critic, &inputs, |o| ppo_critic_head(o, &value, 0.2))?,
        a2c_actor: relative_error(&actor, &inputs, |o| a2c_actor_head(o, &policy, 0.01))?,
        a2c_critic: relative_error(&critic, &inputs, |o| mse_critic_head(o, &value))?,
        dqn: relative_error(&qnet, &inputs, |o| dqn_head(o, &bits, &ys))?,
    })
}
