//! Central finite-difference verification of [`GradTape::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{GradTape, Network};
use super::ops::{cross_entropy_from_logits, softmax, softmax_cross_entropy_grad, Mode};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Scalar objective whose gradient is checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `Σ r_i · y_i` with fixed pseudo-random weights `r ∈ [−1, 1)`.
    Projection { seed: u64 },
    /// Cross-entropy of the softmax of the network output.
    CrossEntropy { target: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub eps: f64,
    pub mode: Mode,
    pub objective: Objective,
    /// Seeds the dropout masks; every evaluation reuses the same masks.
    pub dropout_seed: u64,
    /// Denominator floor: errors are `|a − n| / max(|a|, |n|, floor)`.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-4,
            mode: Mode::Eval,
            objective: Objective::Projection { seed: 0 },
            dropout_seed: 0,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Which coordinate produced the maximum, e.g. `param[12]` or `input[3]`.
    pub worst: String,
    pub checked: usize,
}

impl GradCheck {
    fn objective(
        &self,
        net: &Network,
        params: &[f64],
        input: &Tensor2<f64>,
        tape: Option<&mut GradTape<f64>>,
    ) -> Result<(f64, Tensor2<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.dropout_seed);
        let y = net.forward(params, input.clone(), self.mode, Some(&mut rng), tape)?;
        match self.objective {
            Objective::Projection { seed } => {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let weights: Vec<f64> = (0..y.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
                let value = y.data().iter().zip(&weights).map(|(a, b)| a * b).sum();
                let (c, l) = y.shape();
                Ok((value, Tensor2::from_vec(c, l, weights)?))
            }
            Objective::CrossEntropy { target } => {
                let value = cross_entropy_from_logits(y.data(), target)?;
                let g = softmax_cross_entropy_grad(&softmax(y.data()), target)?;
                let (c, l) = y.shape();
                Ok((value, Tensor2::from_vec(c, l, g)?))
            }
        }
    }

    /// Compares the taped analytic gradient with central differences for
    /// every input value and every parameter.
    pub fn run(&self, net: &Network, params: &[f64], input: &Tensor2<f64>) -> Result<GradCheckReport> {
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::BadArg("eps must be positive".into()));
        }
        let mut tape = GradTape::new();
        let (_, upstream) = self.objective(net, params, input, Some(&mut tape))?;
        let grads = tape.backward(net, params, upstream, true)?;
        let input_grad = grads.input.expect("input gradient requested");

        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: String::new(),
            checked: 0,
        };
        let mut record = |analytic: f64, numeric: f64, what: String| {
            let denom = analytic.abs().max(numeric.abs()).max(self.floor);
            let err = (analytic - numeric).abs() / denom;
            if err > report.max_rel_error || report.checked == 0 {
                report.max_rel_error = err;
                report.worst = what;
            }
            report.checked += 1;
        };

        let mut p = params.to_vec();
        for i in 0..p.len() {
            let orig = p[i];
            p[i] = orig + self.eps;
            let (up, _) = self.objective(net, &p, input, None)?;
            p[i] = orig - self.eps;
            let (down, _) = self.objective(net, &p, input, None)?;
            p[i] = orig;
            record(grads.params[i], (up - down) / (2.0 * self.eps), format!("param[{i}]"));
        }
        let mut x = input.clone();
        for i in 0..x.len() {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + self.eps;
            let (up, _) = self.objective(net, params, &x, None)?;
            x.data_mut()[i] = orig - self.eps;
            let (down, _) = self.objective(net, params, &x, None)?;
            x.data_mut()[i] = orig;
            record(
                input_grad.data()[i],
                (up - down) / (2.0 * self.eps),
                format!("input[{i}]"),
            );
        }
        Ok(report)
    }
}

/// Finite-difference check with default settings (eps 1e-4, eval mode,
/// random projection objective).
pub fn gradient_check(net: &Network, params: &[f64], input: &Tensor2<f64>) -> Result<GradCheckReport> {
    GradCheck::default().run(net, params, input)
}
