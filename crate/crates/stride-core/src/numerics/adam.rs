//! Adam with bias correction, over flat lists of parameter tensors.

use thiserror::Error;

use super::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdamError {
    #[error("gradient {index} has non-finite elements; update rejected")]
    NonFiniteGradient { index: usize },
    #[error("parameter/gradient/moment count mismatch: {params} params, {grads} grads")]
    CountMismatch { params: usize, grads: usize },
    #[error("learning rate must be > 0, got {0}")]
    BadLearningRate(f64),
}

/// Optimizer state: step count plus first/second moments shaped like the
/// parameter set.
#[derive(Debug, Clone)]
pub struct AdamState<R: Real> {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Tensor<R>>,
    v: Vec<Tensor<R>>,
}

impl<R: Real> AdamState<R> {
    /// Fresh state with the standard defaults (beta1=0.9, beta2=0.999,
    /// eps=1e-8), moments zeroed to the given parameter shapes.
    pub fn new(params: &[&Tensor<R>]) -> Self {
        AdamState {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// One Adam update. Rejects (leaving params and state untouched) if any
    /// gradient element is non-finite.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<R>],
        grads: &[&Tensor<R>],
        lr: f64,
    ) -> Result<(), AdamError> {
        if lr <= 0.0 {
            return Err(AdamError::BadLearningRate(lr));
        }
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(AdamError::CountMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if g.data().iter().any(|x| !x.is_finite()) {
                return Err(AdamError::NonFiniteGradient { index: i });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let b1 = R::from_f64(self.beta1);
        let b1c = R::from_f64(1.0 - self.beta1);
        let b2 = R::from_f64(self.beta2);
        let b2c = R::from_f64(1.0 - self.beta2);
        let inv_bc1 = R::from_f64(1.0 / bc1);
        let inv_bc2 = R::from_f64(1.0 / bc2);
        let eps = R::from_f64(self.epsilon);
        let step_r = R::from_f64(lr);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = b1 * *mv + b1c * gv;
                *vv = b2 * *vv + b2c * gv * gv;
                let m_hat = *mv * inv_bc1;
                let v_hat = *vv * inv_bc2;
                *pv = *pv - step_r * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
