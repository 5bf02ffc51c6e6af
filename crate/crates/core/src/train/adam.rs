use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments, kept in `f64` whatever the parameter precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified when a gradient is
/// non-finite; the error names the first offending index as `param[i]`.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            path: format!("param[{i}]"),
        });
    }
    state.t += 1;
    let c1 = 1.0 - BETA1.powf(state.t as f64);
    let c2 = 1.0 - BETA2.powf(state.t as f64);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let step = lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
        if step != 0.0 {
            *p = T::from_f64(p.to_f64() - step);
        }
    }
    Ok(())
}
