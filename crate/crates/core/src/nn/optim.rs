//! Parameter updates: Adam by default, plain gradient descent for tests.

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamGroup, ParameterSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Clip the global gradient norm to this value when set.
    pub clip_norm: Option<f64>,
    pub frozen: Vec<ParamGroup>,
    pub step: u64,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::adam(DEFAULT_LEARNING_RATE)
    }
}

impl OptimizerState {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            frozen: Vec::new(),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(learning_rate)
        }
    }

    pub fn with_frozen(mut self, groups: &[ParamGroup]) -> Self {
        self.frozen = groups.to_vec();
        self
    }

    pub fn with_clip_norm(mut self, clip: f64) -> Self {
        self.clip_norm = Some(clip);
        self
    }
}

/// Applies one update to every non-frozen parameter that has a gradient.
pub fn optimize_step(params: &mut ParameterSet, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    for (id, g) in grads.iter() {
        let p = params.get(id);
        if p.value.shape() != g.shape() {
            return Err(Error::shape(format!(
                "gradient for `{}` is {:?}, parameter is {:?}",
                p.path,
                g.shape(),
                p.value.shape()
            )));
        }
    }
    if state.learning_rate.is_nan() || state.learning_rate <= 0.0 {
        return Err(Error::config("learning rate must be positive"));
    }
    let scale = match state.clip_norm {
        Some(c) => {
            let n = grads.global_norm();
            if n > c {
                c / n
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (id, g) in grads.iter() {
        if state.frozen.contains(&params.get(id).group) {
            continue;
        }
        let lr = state.learning_rate;
        match state.kind {
            OptimizerKind::Sgd => {
                let w = params.value_mut(id).data_mut();
                for (wi, gi) in w.iter_mut().zip(g.data()) {
                    *wi -= lr * scale * gi;
                }
            }
            OptimizerKind::Adam => {
                let i = id.index();
                if state.m.len() <= i {
                    state.m.resize(i + 1, None);
                    state.v.resize(i + 1, None);
                }
                let m = state.m[i].get_or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
                let v = state.v[i].get_or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
                let w = params.value_mut(id).data_mut();
                let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
                for (((wi, &gi), mi), vi) in w
                    .iter_mut()
                    .zip(g.data())
                    .zip(m.data_mut().iter_mut())
                    .zip(v.data_mut().iter_mut())
                {
                    let gi = gi * scale;
                    *mi = b1 * *mi + (1.0 - b1) * gi;
                    *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                    let mhat = *mi / bc1;
                    let vhat = *vi / bc2;
                    *wi -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;

    #[test]
    fn sgd_on_square() {
        let mut ps = ParameterSet::new();
        let w = ps.insert("w", ParamGroup::Basic, Tensor::scalar(1.0)).unwrap();
        let mut st = OptimizerState::sgd(0.1);
        let mut t = Tape::new(&ps);
        let x = t.param(w);
        let y = t.mul(x, x);
        let g = t.backward(y);
        drop(t);
        optimize_step(&mut ps, &g, &mut st).unwrap();
        assert!((ps.value(w).item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn frozen_group_bytes_unchanged() {
        let mut ps = ParameterSet::new();
        let a = ps.insert("a", ParamGroup::Basic, Tensor::scalar(1.0)).unwrap();
        let b = ps.insert("b", ParamGroup::Numerical, Tensor::scalar(1.0)).unwrap();
        let before = ps.group_hash(ParamGroup::Numerical);
        let mut g = Gradients::new();
        g.accumulate(a, &Tensor::scalar(1.0));
        g.accumulate(b, &Tensor::scalar(1.0));
        let mut st = OptimizerState::adam(0.1).with_frozen(&[ParamGroup::Numerical]);
        optimize_step(&mut ps, &g, &mut st).unwrap();
        assert_eq!(before, ps.group_hash(ParamGroup::Numerical));
        assert_ne!(ps.value(a).item(), 1.0);
        assert_eq!(ps.value(b).item().to_bits(), 1.0f64.to_bits());
    }

    #[test]
    fn shape_mismatch_names_parameter() {
        let mut ps = ParameterSet::new();
        let a = ps.insert_zeros("layer.w", ParamGroup::Basic, 2, 2).unwrap();
        let mut g = Gradients::new();
        g.accumulate(a, &Tensor::zeros(1, 2));
        let err = optimize_step(&mut ps, &g, &mut OptimizerState::default()).unwrap_err();
        assert!(err.to_string().contains("layer.w"));
    }

    #[test]
    fn quadratic_converges_to_minimizer() {
        // f(x, y) = (x - 3)^2 + 2 (y + 1)^2, minimizer (3, -1)
        let mut ps = ParameterSet::new();
        let w = ps
            .insert("w", ParamGroup::Basic, Tensor::row_vector(vec![0.0, 0.0]))
            .unwrap();
        let mut st = OptimizerState::sgd(0.2);
        for _ in 0..100 {
            let mut t = Tape::new(&ps);
            let x = t.param(w);
            let target = t.constant(Tensor::row_vector(vec![3.0, -1.0]));
            let wts = t.constant(Tensor::row_vector(vec![1.0, 2.0]));
            let d = t.sub(x, target);
            let sq = t.mul(d, d);
            let weighted = t.mul(sq, wts);
            let loss = t.sum(weighted);
            let g = t.backward(loss);
            drop(t);
            optimize_step(&mut ps, &g, &mut st).unwrap();
        }
        let v = ps.value(w).data();
        assert!((v[0] - 3.0).abs() < 1e-3 && (v[1] + 1.0).abs() < 1e-3, "{v:?}");
    }

    #[test]
    fn default_learning_rate() {
        assert_eq!(OptimizerState::default().learning_rate, 1e-4);
    }
}
