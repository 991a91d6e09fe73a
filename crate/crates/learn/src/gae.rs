//! Generalized advantage estimation over a buffer of consecutive episodes.

/// `R(t) = sum_l (gamma lambda)^l delta(t + l)` with
/// `delta(t) = r(t) + gamma v(t + 1) - v(t)`. The value after a `done`
/// transition, or after the end of the buffer, is zero and the sum does
/// not cross episode boundaries.
pub fn gae_advantages(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len());
    assert_eq!(rewards.len(), dones.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let terminal = dones[t] || t + 1 == n;
        let next_value = if terminal { 0.0 } else { values[t + 1] };
        if terminal {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    adv
}
