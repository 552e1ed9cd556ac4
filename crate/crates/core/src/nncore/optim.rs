use serde::{Deserialize, Serialize};

use super::params::{Grads, Params};
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.05 }
    }
}

/// First and second moment estimates, carried alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Params<F>,
    pub v: Params<F>,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &Params<F>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like() }
    }
}

/// One AdamW step with decoupled weight decay:
///
/// ```text
/// m ← β1·m + (1-β1)·g        v ← β2·v + (1-β2)·g²
/// θ ← θ - lr·wd·θ - lr·m̂/(√v̂ + ε),   m̂ = m/(1-β1^step), v̂ = v/(1-β2^step)
/// ```
///
/// Decay applies to every tensor. `step` counts from 1. Grads are checked
/// before anything is touched, so a failed update leaves `params` and `state`
/// unchanged.
pub fn adamw_update<F: Real>(
    params: &mut Params<F>,
    grads: &Grads<F>,
    state: &mut AdamState<F>,
    hyper: &AdamHyper,
    lr: f64,
    step: usize,
) -> Result<()> {
    if step == 0 {
        return Err(Error::Contract("adamw step counts from 1".into()));
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite { tensor: name });
    }
    let (b1, b2) = (F::of(hyper.beta1), F::of(hyper.beta2));
    let bc1 = F::of(1.0 - hyper.beta1.powi(step as i32));
    let bc2 = F::of(1.0 - hyper.beta2.powi(step as i32));
    let eps = F::of(hyper.eps);
    let lr_f = F::of(lr);
    let decay = F::one() - F::of(lr * hyper.weight_decay);
    let one = F::one();
    for ((((_, p), (_, g)), (_, m)), (_, v)) in
        params.tensors_mut().into_iter().zip(grads.tensors()).zip(state.m.tensors_mut()).zip(state.v.tensors_mut())
    {
        ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p = *p * decay - lr_f * mhat / (vhat.sqrt() + eps);
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{init_params, AttentionMode, ModelConfig, Precision};

    fn params() -> Params<f64> {
        let c = ModelConfig {
            vocab_size: 7,
            model_dim: 4,
            num_layers: 1,
            num_heads: 1,
            ffn_dim: 4,
            max_positions: 6,
            feature_dim: 2,
            attention: AttentionMode::Bidirectional,
            precision: Precision::Double,
        };
        init_params(&c, 11).unwrap()
    }

    #[test]
    fn zero_grads_without_decay_leave_params_unchanged() {
        let mut p = params();
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::new(&p);
        let hyper = AdamHyper { weight_decay: 0.0, ..Default::default() };
        adamw_update(&mut p, &g, &mut st, &hyper, 1e-2, 1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn zero_grads_with_decay_shrink_every_weight() {
        let mut p = params();
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::new(&p);
        let lr = 1e-2;
        adamw_update(&mut p, &g, &mut st, &AdamHyper::default(), lr, 1).unwrap();
        let factor = 1.0 - lr * 0.05;
        for ((_, a), (_, b)) in p.tensors().into_iter().zip(before.tensors()) {
            for (&x, &y) in a.iter().zip(b.iter()) {
                assert_eq!(x, y * factor);
            }
        }
    }

    #[test]
    fn scalar_recursion_matches_hand_calculation() {
        // Single parameter θ0 = 0.5, grads 0.2 then -0.1, lr 0.1, wd 0.05.
        // step 1: m = 0.02, v = 4e-5, m̂ = 0.2, v̂ = 0.04
        //         θ = 0.5·0.995 - 0.1·0.2/(0.2 + 1e-8)
        // step 2: m = 0.9·0.02 - 0.01 = 0.008, v = 0.999·4e-5 + 1e-5 = 4.996e-5
        //         m̂ = 0.008/0.19, v̂ = 4.996e-5/(1 - 0.998001)
        let hyper = AdamHyper::default();
        let mut p = params();
        p.lnf_b[[0, 0]] = 0.5;
        let mut st = AdamState::new(&p);
        let mut g = p.zeros_like();
        g.lnf_b[[0, 0]] = 0.2;
        adamw_update(&mut p, &g, &mut st, &hyper, 0.1, 1).unwrap();
        let theta1 = 0.5 * 0.995 - 0.1 * 0.2 / (0.2 + 1e-8);
        assert!((p.lnf_b[[0, 0]] - theta1).abs() < 1e-12);
        g.lnf_b[[0, 0]] = -0.1;
        adamw_update(&mut p, &g, &mut st, &hyper, 0.1, 2).unwrap();
        let mhat: f64 = 0.008 / 0.19;
        let vhat: f64 = 4.996e-5 / (1.0 - 0.998001);
        let theta2 = theta1 * 0.995 - 0.1 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p.lnf_b[[0, 0]] - theta2).abs() < 1e-12, "{} vs {theta2}", p.lnf_b[[0, 0]]);
    }

    #[test]
    fn non_finite_grads_name_the_tensor() {
        let mut p = params();
        let mut g = p.zeros_like();
        g.layers[0].wk[[1, 1]] = f64::NAN;
        let mut st = AdamState::new(&p);
        let before = p.clone();
        let err = adamw_update(&mut p, &g, &mut st, &AdamHyper::default(), 0.1, 1).unwrap_err();
        assert!(matches!(&err, Error::NonFinite { tensor } if tensor == "layers.0.wk"));
        assert_eq!(p, before);
    }
}
