use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{is_decayed, BiIceConfig, BiIceParams};
use crate::numerics::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment estimates and step count of the AdamW optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AdamWState<T = f64> {
    pub m: BiIceParams<T>,
    pub v: BiIceParams<T>,
    /// Completed optimizer steps.
    pub step: usize,
}

impl<T: Real> AdamWState<T> {
    pub fn new(cfg: &BiIceConfig) -> Self {
        AdamWState {
            m: BiIceParams::zeros(cfg),
            v: BiIceParams::zeros(cfg),
            step: 0,
        }
    }
}

/// One AdamW update of a flat tensor at step `t ≥ 1`.
///
/// Decoupled weight decay shrinks `theta` before the bias-corrected Adam step.
pub fn adamw_update<T: Real>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: usize,
    lr: f64,
    weight_decay: f64,
) {
    let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
    let one = T::one();
    let c1 = T::lit(1.0 - BETA1.powi(t as i32));
    let c2 = T::lit(1.0 - BETA2.powi(t as i32));
    let lr_t = T::lit(lr);
    let decay = T::lit(1.0 - lr * weight_decay);
    let eps = T::lit(EPSILON);
    for i in 0..theta.len() {
        let g = grad[i];
        theta[i] = theta[i] * decay;
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] = theta[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies one AdamW step to every parameter tensor. Weight decay reaches
/// only the tensors selected by [`is_decayed`].
pub fn adamw_step<T: Real>(
    params: &mut BiIceParams<T>,
    grads: &BiIceParams<T>,
    state: &mut AdamWState<T>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if let Some((name, _)) = grads.tensors().iter().find(|(_, g)| !g.all_finite()) {
        return Err(Error::Training {
            iteration: state.step,
            message: format!("non-finite gradient in {name}"),
            norms: params.norm_summary(),
        });
    }
    state.step += 1;
    let t = state.step;
    let AdamWState { m, v, .. } = state;
    for ((((name, theta), (_, g)), (_, m)), (_, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(m.tensors_mut())
        .zip(v.tensors_mut())
    {
        if theta.shape() != g.shape() {
            return Err(Error::shape(
                "adamw_step",
                format!("{name}: parameter {:?}, gradient {:?}", theta.shape(), g.shape()),
            ));
        }
        let wd = if is_decayed(name) { weight_decay } else { 0.0 };
        adamw_update(theta.data_mut(), g.data(), m.data_mut(), v.data_mut(), t, lr, wd);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = BiIceConfig::new(3, 4, 2, 2);
        let mut p: BiIceParams<f64> = BiIceParams::init(&cfg, &mut RngState::new(0)).unwrap();
        let before = p.clone();
        let mut st = AdamWState::new(&cfg);
        adamw_step(&mut p, &BiIceParams::zeros(&cfg), &mut st, 0.1, 0.0).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_scalar_step_matches_hand_rolled_update() {
        let (mut th, mut m, mut v) = ([1.0f64], [0.0], [0.0]);
        adamw_update(&mut th, &[1.0], &mut m, &mut v, 1, 0.1, 0.0);
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
        let expect = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((th[0] - expect).abs() < 1e-15);
        assert!((th[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn decay_only_scales_geometrically() {
        let (mut th, mut m, mut v) = ([2.0f64, -4.0], [0.0; 2], [0.0; 2]);
        for t in 1..=3 {
            adamw_update(&mut th, &[0.0, 0.0], &mut m, &mut v, t, 1.0, 0.1);
        }
        assert!((th[0] - 2.0 * 0.9f64.powi(3)).abs() < 1e-15);
        assert!((th[1] + 4.0 * 0.9f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn decay_skips_bank_and_biases() {
        let cfg = BiIceConfig::new(2, 3, 2, 2);
        let mut p: BiIceParams<f64> = BiIceParams::init(&cfg, &mut RngState::new(1)).unwrap();
        let before = p.clone();
        let mut st = AdamWState::new(&cfg);
        adamw_step(&mut p, &BiIceParams::zeros(&cfg), &mut st, 1.0, 0.5).unwrap();
        assert_eq!(p.bank, before.bank);
        assert_eq!(p.cell.w_z, before.cell.w_z);
        assert_eq!(p.head, before.head.scale(0.5));
        assert_eq!(p.q_omega.weight, before.q_omega.weight.scale(0.5));
    }

    #[test]
    fn non_finite_gradient_is_a_training_error() {
        let cfg = BiIceConfig::new(2, 3, 2, 2);
        let mut p: BiIceParams<f64> = BiIceParams::zeros(&cfg);
        let mut g = BiIceParams::zeros(&cfg);
        g.head.set(0, 0, f64::NAN);
        let err = adamw_step(&mut p, &g, &mut AdamWState::new(&cfg), 0.1, 0.0).unwrap_err();
        assert!(matches!(err, Error::Training { .. }));
    }
}
