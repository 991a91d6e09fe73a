//! Actor, critic and Q-network losses with their gradients.
//!
//! Each `*_head` function works on network outputs and returns the loss
//! together with its gradient with respect to those outputs; [`through`]
//! carries that gradient back to the parameters. Every loss is minimized,
//! so actor objectives appear negated.
//!
//! A policy output is one logit per binary decision. The decision is 1 with
//! probability `sigmoid(logit)` and decisions are independent, so the
//! log-probability of a bit vector is the sum of per-bit terms and the
//! ratio is taken per bit.

use nalgebra::DMatrix;
use rand::RngCore;

use crate::net::{log_sigmoid, sigmoid, Mlp};
use crate::LearnError;

/// Per-sample quantities fixed before an update round.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTargets {
    /// `bits[b][a]`, the sampled decision `a` of sample `b`.
    pub bits: Vec<Vec<bool>>,
    /// Log-probabilities of those bits under the parameters that sampled them.
    pub old_log_probs: Vec<Vec<f64>>,
    pub advantages: Vec<f64>,
    /// `active[b][a]` is false when decision `a` of sample `b` was forced
    /// regardless of the policy; such decisions carry no gradient.
    pub active: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTargets {
    pub old_values: Vec<f64>,
    /// `v_old + R`
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadLoss {
    pub loss: f64,
    /// Gradient of `loss` with respect to the network outputs.
    pub d_out: DMatrix<f64>,
    /// Mean surrogate (clip or log-probability) term, before negation.
    pub surrogate: f64,
    /// Mean per-sample entropy.
    pub entropy: f64,
}

/// `log pi(bit)` for a logit.
pub fn bit_log_prob(logit: f64, bit: bool) -> f64 {
    if bit {
        log_sigmoid(logit)
    } else {
        log_sigmoid(-logit)
    }
}

/// Entropy of one Bernoulli decision and its derivative in the logit.
fn bit_entropy(logit: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    let h = -(p * log_sigmoid(logit) + (1.0 - p) * log_sigmoid(-logit));
    (h, -logit * p * (1.0 - p))
}

fn check_targets(logits: &DMatrix<f64>, t: &PolicyTargets) -> Result<(), LearnError> {
    let b = logits.ncols();
    for (what, got) in [
        ("bits", t.bits.len()),
        ("old log-probabilities", t.old_log_probs.len()),
        ("advantages", t.advantages.len()),
        ("active flags", t.active.len()),
    ] {
        if got != b {
            return Err(LearnError::Shape { what, expected: b, got });
        }
    }
    for ((bits, lp), act) in t.bits.iter().zip(&t.old_log_probs).zip(&t.active) {
        let n = logits.nrows();
        if bits.len() != n || lp.len() != n || act.len() != n {
            return Err(LearnError::Shape {
                what: "decisions per sample",
                expected: n,
                got: bits.len().min(lp.len()).min(act.len()),
            });
        }
    }
    Ok(())
}

/// Number of active decisions, at least one.
fn active_count(t: &PolicyTargets) -> f64 {
    (t.active.iter().flatten().filter(|&&a| a).count() as f64).max(1.0)
}

fn finite(what: &'static str, v: f64) -> Result<f64, LearnError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LearnError::NonFinite { what })
    }
}

/// Adds `-beta * mean entropy` over active decisions to `d_out` and returns
/// the mean per-sample entropy.
fn add_entropy(logits: &DMatrix<f64>, active: &[Vec<bool>], beta: f64, d_out: &mut DMatrix<f64>) -> f64 {
    let b_dim = logits.ncols();
    let b = b_dim as f64;
    let mut total = 0.0;
    for c in 0..b_dim {
        for a in 0..logits.nrows() {
            if !active[c][a] {
                continue;
            }
            let (h, dh) = bit_entropy(logits[(a, c)]);
            total += h;
            d_out[(a, c)] -= beta * dh / b;
        }
    }
    total / b
}

/// Clipped surrogate plus entropy bonus:
/// `-(mean min(phi R, clip(phi, 1 - eps, 1 + eps) R) + beta mean H)`, the
/// first mean over active decisions of all samples, `H` summed over the
/// active decisions of a sample.
pub fn ppo_actor_head(logits: &DMatrix<f64>, t: &PolicyTargets, clip: f64, beta: f64) -> Result<HeadLoss, LearnError> {
    check_targets(logits, t)?;
    let (a_dim, b_dim) = logits.shape();
    let count = active_count(t);
    let mut d_out = DMatrix::zeros(a_dim, b_dim);
    let mut surrogate = 0.0;
    for b in 0..b_dim {
        let adv = t.advantages[b];
        for a in (0..a_dim).filter(|&a| t.active[b][a]) {
            let l = logits[(a, b)];
            let bit = t.bits[b][a];
            let ratio = (bit_log_prob(l, bit) - t.old_log_probs[b][a]).exp();
            let plain = ratio * adv;
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
            if plain <= clipped {
                surrogate += plain;
                // d log pi / d logit = bit - p
                let dlogp = if bit { 1.0 } else { 0.0 } - sigmoid(l);
                d_out[(a, b)] -= adv * ratio * dlogp / count;
            } else {
                surrogate += clipped;
            }
        }
    }
    surrogate /= count;
    let entropy = add_entropy(logits, &t.active, beta, &mut d_out);
    let loss = finite("actor loss", -(surrogate + beta * entropy))?;
    Ok(HeadLoss {
        loss,
        d_out,
        surrogate,
        entropy,
    })
}

/// `-(mean log pi R + beta mean H)`
pub fn a2c_actor_head(logits: &DMatrix<f64>, t: &PolicyTargets, beta: f64) -> Result<HeadLoss, LearnError> {
    check_targets(logits, t)?;
    let (a_dim, b_dim) = logits.shape();
    let count = active_count(t);
    let mut d_out = DMatrix::zeros(a_dim, b_dim);
    let mut surrogate = 0.0;
    for b in 0..b_dim {
        let adv = t.advantages[b];
        for a in (0..a_dim).filter(|&a| t.active[b][a]) {
            let l = logits[(a, b)];
            let bit = t.bits[b][a];
            surrogate += bit_log_prob(l, bit) * adv;
            let dlogp = if bit { 1.0 } else { 0.0 } - sigmoid(l);
            d_out[(a, b)] -= adv * dlogp / count;
        }
    }
    surrogate /= count;
    let entropy = add_entropy(logits, &t.active, beta, &mut d_out);
    let loss = finite("actor loss", -(surrogate + beta * entropy))?;
    Ok(HeadLoss {
        loss,
        d_out,
        surrogate,
        entropy,
    })
}

fn check_values(values: &DMatrix<f64>, t: &ValueTargets) -> Result<(), LearnError> {
    if values.nrows() != 1 {
        return Err(LearnError::Shape {
            what: "critic outputs",
            expected: 1,
            got: values.nrows(),
        });
    }
    for (what, got) in [("old values", t.old_values.len()), ("value targets", t.targets.len())] {
        if got != values.ncols() {
            return Err(LearnError::Shape {
                what,
                expected: values.ncols(),
                got,
            });
        }
    }
    Ok(())
}

/// `mean max((v - v_tar)^2, (v_clip - v_tar)^2)` with
/// `v_clip = v_old + clip(v - v_old, -eps, eps)`.
pub fn ppo_critic_head(values: &DMatrix<f64>, t: &ValueTargets, clip: f64) -> Result<HeadLoss, LearnError> {
    check_values(values, t)?;
    let n = values.ncols() as f64;
    let mut d_out = DMatrix::zeros(1, values.ncols());
    let mut loss = 0.0;
    for b in 0..values.ncols() {
        let v = values[(0, b)];
        let (old, tar) = (t.old_values[b], t.targets[b]);
        let step = v - old;
        let v_clip = old + step.clamp(-clip, clip);
        let plain = (v - tar).powi(2);
        let clipped = (v_clip - tar).powi(2);
        if plain >= clipped {
            loss += plain;
            d_out[(0, b)] = 2.0 * (v - tar) / n;
        } else {
            loss += clipped;
            if step.abs() < clip {
                d_out[(0, b)] = 2.0 * (v_clip - tar) / n;
            }
        }
    }
    Ok(HeadLoss {
        loss: finite("critic loss", loss / n)?,
        d_out,
        surrogate: 0.0,
        entropy: 0.0,
    })
}

/// `mean (v - v_tar)^2`
pub fn mse_critic_head(values: &DMatrix<f64>, t: &ValueTargets) -> Result<HeadLoss, LearnError> {
    check_values(values, t)?;
    let n = values.ncols() as f64;
    let mut d_out = DMatrix::zeros(1, values.ncols());
    let mut loss = 0.0;
    for b in 0..values.ncols() {
        let e = values[(0, b)] - t.targets[b];
        loss += e * e;
        d_out[(0, b)] = 2.0 * e / n;
    }
    Ok(HeadLoss {
        loss: finite("critic loss", loss / n)?,
        d_out,
        surrogate: 0.0,
        entropy: 0.0,
    })
}

/// `Q(s, a) = sum_a q[2a + bit_a]` for a Q-network with two outputs per
/// decision.
pub fn q_value(q: &DMatrix<f64>, col: usize, bits: &[bool]) -> f64 {
    bits.iter()
        .enumerate()
        .map(|(a, &bit)| q[(2 * a + usize::from(bit), col)])
        .sum()
}

/// Largest `Q(s, a)` over bit vectors with `a <= allowed`, and its argmax.
/// Ties keep the bit at zero.
pub fn q_max(q: &DMatrix<f64>, col: usize, allowed: &[bool]) -> (f64, Vec<bool>) {
    let mut total = 0.0;
    let mut bits = Vec::with_capacity(allowed.len());
    for (a, &ok) in allowed.iter().enumerate() {
        let (off, on) = (q[(2 * a, col)], q[(2 * a + 1, col)]);
        let take = ok && on > off;
        total += if take { on } else { off };
        bits.push(take);
    }
    (total, bits)
}

/// Squared temporal-difference loss `mean (y - Q(s, a))^2` for fixed
/// targets `y = r + gamma max Q_target(s', a')`.
pub fn dqn_head(q: &DMatrix<f64>, actions: &[Vec<bool>], targets: &[f64]) -> Result<HeadLoss, LearnError> {
    let n = q.ncols();
    if actions.len() != n || targets.len() != n {
        return Err(LearnError::Shape {
            what: "Q-learning batch",
            expected: n,
            got: actions.len().min(targets.len()),
        });
    }
    let mut d_out = DMatrix::zeros(q.nrows(), n);
    let mut loss = 0.0;
    for b in 0..n {
        if 2 * actions[b].len() != q.nrows() {
            return Err(LearnError::Shape {
                what: "Q outputs",
                expected: 2 * actions[b].len(),
                got: q.nrows(),
            });
        }
        let e = q_value(q, b, &actions[b]) - targets[b];
        loss += e * e;
        for (a, &bit) in actions[b].iter().enumerate() {
            d_out[(2 * a + usize::from(bit), b)] = 2.0 * e / n as f64;
        }
    }
    Ok(HeadLoss {
        loss: finite("Q loss", loss / n as f64)?,
        d_out,
        surrogate: 0.0,
        entropy: 0.0,
    })
}

/// Runs `head` on a taped pass of `net` and returns it with the parameter
/// gradient.
pub fn through(
    net: &Mlp,
    inputs: &DMatrix<f64>,
    dropout: f64,
    rng: &mut dyn RngCore,
    head: impl FnOnce(&DMatrix<f64>) -> Result<HeadLoss, LearnError>,
) -> Result<(HeadLoss, Mlp), LearnError> {
    let (out, tape) = net.forward_train(inputs, dropout, rng)?;
    let h = head(&out)?;
    let grads = net.backward(&tape, &h.d_out);
    Ok((h, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use freshedge_core::rng::stream;
    use rand::Rng;

    fn targets(logits: &DMatrix<f64>, rng: &mut impl Rng, drift: f64) -> PolicyTargets {
        let (a, b) = logits.shape();
        let bits: Vec<Vec<bool>> = (0..b).map(|_| (0..a).map(|_| rng.random_bool(0.5)).collect()).collect();
        let old = (0..b)
            .map(|c| {
                (0..a)
                    .map(|r| bit_log_prob(logits[(r, c)], bits[c][r]) + rng.random_range(-drift..=drift))
                    .collect()
            })
            .collect();
        PolicyTargets {
            bits,
            old_log_probs: old,
            advantages: (0..b).map(|_| rng.random_range(-2.0..2.0)).collect(),
            active: vec![vec![true; a]; b],
        }
    }

    #[test]
    fn inactive_decisions_carry_no_gradient() {
        let mut rng = stream(12, "inactive");
        let logits = DMatrix::from_fn(4, 5, |_, _| rng.random_range(-1.0..1.0));
        let mut t = targets(&logits, &mut rng, 0.1);
        for (c, act) in t.active.iter_mut().enumerate() {
            act[c % 4] = false;
        }
        for h in [
            ppo_actor_head(&logits, &t, 0.2, 0.01).unwrap(),
            a2c_actor_head(&logits, &t, 0.01).unwrap(),
        ] {
            for c in 0..5 {
                assert_eq!(h.d_out[(c % 4, c)], 0.0);
            }
        }
        // flipping an inactive bit leaves the loss unchanged
        let before = ppo_actor_head(&logits, &t, 0.2, 0.01).unwrap().loss;
        t.bits[0][0] = !t.bits[0][0];
        assert_eq!(ppo_actor_head(&logits, &t, 0.2, 0.01).unwrap().loss, before);
    }

    #[test]
    fn unchanged_policy_gives_mean_advantage() {
        let mut rng = stream(0, "loss");
        let logits = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-2.0..2.0));
        let t = targets(&logits, &mut rng, 0.0);
        let h = ppo_actor_head(&logits, &t, 0.2, 0.0).unwrap();
        let mean = t.advantages.iter().sum::<f64>() / 5.0;
        assert!((h.surrogate - mean).abs() < 1e-12);
        let a2c = a2c_actor_head(&logits, &t, 0.0).unwrap();
        assert!(a2c.surrogate.is_finite());
    }

    #[test]
    fn clipped_branch_has_no_ratio_gradient() {
        let logits = DMatrix::from_column_slice(2, 1, &[0.3, -0.7]);
        let bits = vec![vec![true, false]];
        // ratio 1 + 2 eps on both decisions
        let old = vec![vec![
            bit_log_prob(0.3, true) - 1.4f64.ln(),
            bit_log_prob(-0.7, false) - 1.4f64.ln(),
        ]];
        let t = PolicyTargets {
            bits,
            old_log_probs: old,
            advantages: vec![1.5],
            active: vec![vec![true; 2]],
        };
        let h = ppo_actor_head(&logits, &t, 0.2, 0.0).unwrap();
        assert!((h.surrogate - 1.2 * 1.5).abs() < 1e-12);
        assert_eq!(h.d_out, DMatrix::zeros(2, 1));
        // a negative advantage favours moving back, so the plain branch is active
        let t = PolicyTargets {
            advantages: vec![-1.5],
            ..t
        };
        let h = ppo_actor_head(&logits, &t, 0.2, 0.0).unwrap();
        assert!(h.d_out.iter().all(|d| *d != 0.0));
    }

    #[test]
    fn uniform_policy_entropy_is_maximal() {
        let logits = DMatrix::zeros(5, 3);
        let t = PolicyTargets {
            bits: vec![vec![false; 5]; 3],
            old_log_probs: vec![vec![-std::f64::consts::LN_2; 5]; 3],
            advantages: vec![0.0; 3],
            active: vec![vec![true; 5]; 3],
        };
        let h = ppo_actor_head(&logits, &t, 0.2, 0.01).unwrap();
        assert!((h.entropy - 5.0 * std::f64::consts::LN_2).abs() < 1e-12);
        // entropy is stationary at the uniform policy
        assert!(h.d_out.iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn zero_advantages_leave_only_the_entropy_gradient() {
        let mut rng = stream(1, "loss");
        let logits = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-2.0..2.0));
        let mut t = targets(&logits, &mut rng, 0.3);
        t.advantages = vec![0.0; 6];
        let beta = 0.05;
        for h in [
            ppo_actor_head(&logits, &t, 0.2, beta).unwrap(),
            a2c_actor_head(&logits, &t, beta).unwrap(),
        ] {
            for (l, d) in logits.iter().zip(h.d_out.iter()) {
                let p = sigmoid(*l);
                let expected = beta * l * p * (1.0 - p) / 6.0;
                assert!((d - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn critic_clip_freezes_far_moves() {
        let v = DMatrix::from_row_slice(1, 2, &[1.0, 0.1]);
        let t = ValueTargets {
            old_values: vec![0.0, 0.0],
            targets: vec![-1.0, 1.0],
        };
        let h = ppo_critic_head(&v, &t, 0.2).unwrap();
        // sample 0: plain (1 - -1)^2 = 4 beats clipped (0.2 + 1)^2 = 1.44
        // sample 1: clipped step 0.1 equals the plain value
        assert!((h.loss - (4.0 + 0.81) / 2.0).abs() < 1e-12);
        assert!((h.d_out[(0, 0)] - 2.0).abs() < 1e-12);
        let t = ValueTargets {
            old_values: vec![0.0],
            targets: vec![0.9],
        };
        // plain (0.95 - 0.9)^2 < clipped (0.2 - 0.9)^2 and the step is clipped
        let h = ppo_critic_head(&DMatrix::from_element(1, 1, 0.95), &t, 0.2).unwrap();
        assert_eq!(h.d_out[(0, 0)], 0.0);
    }

    #[test]
    fn q_helpers() {
        let q = DMatrix::from_column_slice(4, 1, &[1.0, 3.0, 2.0, -1.0]);
        assert_eq!(q_value(&q, 0, &[true, false]), 5.0);
        assert_eq!(q_max(&q, 0, &[true, true]), (5.0, vec![true, false]));
        assert_eq!(q_max(&q, 0, &[false, true]), (3.0, vec![false, false]));
        let h = dqn_head(&q, &[vec![true, false]], &[4.0]).unwrap();
        assert_eq!(h.loss, 1.0);
        assert_eq!(h.d_out.as_slice(), &[0.0, 2.0, 2.0, 0.0]);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let logits = DMatrix::from_element(1, 1, f64::NAN);
        let t = PolicyTargets {
            bits: vec![vec![true]],
            old_log_probs: vec![vec![0.0]],
            advantages: vec![1.0],
            active: vec![vec![true]],
        };
        assert!(matches!(
            ppo_actor_head(&logits, &t, 0.2, 0.0),
            Err(LearnError::NonFinite { .. })
        ));
    }
}
