//! Fully connected network with GELU hidden layers and a linear output,
//! plus its reverse pass. Samples are columns.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::LearnError;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    let t = (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh();
    0.5 * x * (1.0 + t)
}

pub fn gelu_prime(x: f64) -> f64 {
    let t = (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Weights `W_l` map layer `l` to layer `l + 1`; the same type holds
/// gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Activations kept by [`Mlp::forward_train`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<DMatrix<f64>>,
    /// Inverted-dropout multipliers of the hidden layers.
    masks: Vec<Option<DMatrix<f64>>>,
}

impl Mlp {
    /// Scaled normal weights (variance `1 / fan_in`), zero biases. The output
    /// layer is further scaled by `out_gain`.
    pub fn new(sizes: &[usize], out_gain: f64, rng: &mut (impl Rng + ?Sized)) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let std = (1.0 / fan_in as f64).sqrt() * if l + 1 == layers { out_gain } else { 1.0 };
            let normal = Normal::new(0.0, std).expect("positive std");
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| normal.sample(rng)));
            biases.push(DVector::zeros(fan_out));
        }
        Self { weights, biases }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            biases: self.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    /// `[input, hidden..., output]`
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].ncols()];
        s.extend(self.weights.iter().map(|w| w.nrows()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("at least one layer").nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters in layer order, each weight matrix row-major, then its bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..w.nrows() {
                out.extend(w.row(r).iter());
            }
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), LearnError> {
        if values.len() != self.num_params() {
            return Err(LearnError::Shape {
                what: "flat parameters",
                expected: self.num_params(),
                got: values.len(),
            });
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    w[(r, c)] = values[k];
                    k += 1;
                }
            }
            for v in b.iter_mut() {
                *v = values[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Mlp) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            *w += o * alpha;
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            *b += o * alpha;
        }
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<(), LearnError> {
        if x.nrows() != self.input_dim() {
            return Err(LearnError::Shape {
                what: "network input",
                expected: self.input_dim(),
                got: x.nrows(),
            });
        }
        Ok(())
    }

    fn affine(&self, l: usize, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights[l] * a;
        for mut col in z.column_iter_mut() {
            col += &self.biases[l];
        }
        z
    }

    /// Evaluation pass, dropout off.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, LearnError> {
        self.check_input(x)?;
        let last = self.weights.len() - 1;
        let mut a = x.clone();
        for l in 0..last {
            a = self.affine(l, &a).map(gelu);
        }
        Ok(self.affine(last, &a))
    }

    pub fn forward_one(&self, x: &DVector<f64>) -> Result<DVector<f64>, LearnError> {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        Ok(self.forward(&m)?.column(0).into_owned())
    }

    /// Training pass. Hidden units are dropped with probability `dropout`
    /// and survivors rescaled by `1 / (1 - dropout)`.
    pub fn forward_train(
        &self,
        x: &DMatrix<f64>,
        dropout: f64,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<(DMatrix<f64>, Tape), LearnError> {
        self.check_input(x)?;
        let last = self.weights.len() - 1;
        let mut tape = Tape {
            inputs: Vec::with_capacity(last + 1),
            pre: Vec::with_capacity(last),
            masks: Vec::with_capacity(last),
        };
        let mut a = x.clone();
        for l in 0..last {
            let z = self.affine(l, &a);
            let mut h = z.map(gelu);
            let mask = (dropout > 0.0).then(|| {
                let keep = 1.0 / (1.0 - dropout);
                DMatrix::from_fn(
                    h.nrows(),
                    h.ncols(),
                    |_, _| if rng.random_bool(dropout) { 0.0 } else { keep },
                )
            });
            if let Some(m) = &mask {
                h.component_mul_assign(m);
            }
            tape.inputs.push(a);
            tape.pre.push(z);
            tape.masks.push(mask);
            a = h;
        }
        let out = self.affine(last, &a);
        tape.inputs.push(a);
        Ok((out, tape))
    }

    /// Parameter gradient of a scalar whose gradient with respect to the
    /// outputs of the taped pass is `d_out`.
    pub fn backward(&self, tape: &Tape, d_out: &DMatrix<f64>) -> Mlp {
        let layers = self.weights.len();
        let mut grads = self.zeros_like();
        let mut delta = d_out.clone();
        for l in (0..layers).rev() {
            grads.weights[l] = &delta * tape.inputs[l].transpose();
            grads.biases[l] = delta.column_sum();
            if l == 0 {
                break;
            }
            let mut back = self.weights[l].transpose() * &delta;
            if let Some(m) = &tape.masks[l - 1] {
                back.component_mul_assign(m);
            }
            back.component_mul_assign(&tape.pre[l - 1].map(gelu_prime));
            delta = back;
        }
        grads
    }
}
