//! Adam with a per-round learning-rate schedule.

use crate::net::Mlp;

/// Learning rate moving linearly from `initial` to `final_` over
/// `decay_rounds` update rounds, then held.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub final_: f64,
    pub decay_rounds: usize,
}

impl LrSchedule {
    pub fn at(&self, round: usize) -> f64 {
        if self.decay_rounds == 0 {
            return self.final_;
        }
        let frac = (round as f64 / self.decay_rounds as f64).min(1.0);
        self.initial + (self.final_ - self.initial) * frac
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 1e-3,
            final_: 1e-4,
            decay_rounds: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Mlp,
    pub v: Mlp,
}

impl Adam {
    pub fn new(like: &Mlp) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn update(&mut self, params: &mut Mlp, grad: &Mlp, lr: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        };
        for l in 0..params.weights.len() {
            apply(
                params.weights[l].as_mut_slice(),
                grad.weights[l].as_slice(),
                self.m.weights[l].as_mut_slice(),
                self.v.weights[l].as_mut_slice(),
            );
            apply(
                params.biases[l].as_mut_slice(),
                grad.biases[l].as_slice(),
                self.m.biases[l].as_mut_slice(),
                self.v.biases[l].as_mut_slice(),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use freshedge_core::rng::stream;

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::default();
        assert_eq!(s.at(0), 1e-3);
        assert!((s.at(50) - 5.5e-4).abs() < 1e-15);
        assert!((s.at(100) - 1e-4).abs() < 1e-18);
        assert_eq!(s.at(1000), s.at(100));
    }

    #[test]
    fn first_step_moves_each_parameter_by_lr() {
        let mut rng = stream(0, "adam");
        let mut p = Mlp::new(&[2, 3], 1.0, &mut rng);
        let before = p.flat();
        let mut g = p.zeros_like();
        g.set_flat(&[1.0, -2.0, 3.0, 0.5, -0.1, 4.0, 1.0, -1.0, 2.0]).unwrap();
        let mut opt = Adam::new(&p);
        opt.update(&mut p, &g, 0.01);
        for ((a, b), gk) in p.flat().iter().zip(&before).zip(g.flat()) {
            assert!((b - a - 0.01 * gk.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut rng = stream(1, "adam");
        let mut p = Mlp::new(&[3, 2], 1.0, &mut rng);
        let target: Vec<f64> = (0..p.num_params()).map(|k| k as f64 * 0.1).collect();
        let mut opt = Adam::new(&p);
        for _ in 0..3000 {
            let diff: Vec<f64> = p.flat().iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            let mut g = p.zeros_like();
            g.set_flat(&diff).unwrap();
            opt.update(&mut p, &g, 0.01);
        }
        for (a, b) in p.flat().iter().zip(&target) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
