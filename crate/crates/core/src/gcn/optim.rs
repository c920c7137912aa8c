use serde::{Deserialize, Serialize};

use super::matrix::{real, Real};
use super::{GcnError, GcnParams, TENSOR_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub adam: AdamSettings,
    pub step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        let len = if kind == OptimizerKind::Adam { num_params } else { 0 };
        Self {
            kind,
            adam: AdamSettings::default(),
            step: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }

    /// Zeroes the moments and the step counter.
    pub fn reset(&mut self) {
        self.step = 0;
        self.m.iter_mut().for_each(|x| *x = T::zero());
        self.v.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn moments_are_zero(&self) -> bool {
        self.step == 0 && self.m.iter().chain(&self.v).all(|&x| x == T::zero())
    }
}

/// One Adam or SGD update. The gradient is checked for non-finite entries
/// before anything is modified.
pub fn optimizer_step<T: Real>(
    params: &mut GcnParams<T>,
    grad: &GcnParams<T>,
    state: &mut OptimizerState<T>,
    lr: T,
) -> Result<(), GcnError> {
    if params.dims() != grad.dims() {
        return Err(GcnError::Dimension("gradient and parameter shapes differ".into()));
    }
    for (name, t) in TENSOR_NAMES.iter().zip(grad.tensors()) {
        if t.iter().any(|x| !x.is_finite()) {
            return Err(GcnError::NonFiniteGradient(name));
        }
    }
    match state.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.tensors_mut().into_iter().zip(grad.tensors()) {
                for (x, &d) in p.iter_mut().zip(g) {
                    *x -= lr * d;
                }
            }
        }
        OptimizerKind::Adam => {
            if state.m.len() != params.num_params() {
                state.m = vec![T::zero(); params.num_params()];
                state.v = vec![T::zero(); params.num_params()];
            }
            state.step += 1;
            let b1: T = real(state.adam.beta1);
            let b2: T = real(state.adam.beta2);
            let eps: T = real(state.adam.eps);
            let t = state.step as i32;
            let c1 = T::one() - b1.powi(t);
            let c2 = T::one() - b2.powi(t);
            let mut i = 0;
            for (p, g) in params.tensors_mut().into_iter().zip(grad.tensors()) {
                for (x, &d) in p.iter_mut().zip(g) {
                    let m = b1 * state.m[i] + (T::one() - b1) * d;
                    let v = b2 * state.v[i] + (T::one() - b2) * d * d;
                    state.m[i] = m;
                    state.v[i] = v;
                    *x -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                    i += 1;
                }
            }
        }
    }
    Ok(())
}
