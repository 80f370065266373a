//! Adam with bias correction.

use super::params::ModelParams;
use super::scalar::Scalar;
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update of a flat parameter slice. `step` is the 1-based index
/// of this update.
pub fn adam_update<S: Scalar>(param: &mut [S], grad: &[S], m: &mut [S], v: &mut [S], step: u64, cfg: &AdamConfig) {
    let (b1, b2) = (S::from_f64(cfg.beta1), S::from_f64(cfg.beta2));
    let one = S::one();
    let c1 = S::from_f64(1.0 - cfg.beta1.powf(step as f64));
    let c2 = S::from_f64(1.0 - cfg.beta2.powf(step as f64));
    let lr = S::from_f64(cfg.lr);
    let eps = S::from_f64(cfg.eps);
    for (((p, g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (one - b1) * *g;
        *v = b2 * *v + (one - b2) * *g * *g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Moment estimates mirroring a parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: ModelParams<S>,
    pub v: ModelParams<S>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ModelParams<S>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams<S>, grads: &ModelParams<S>, cfg: &AdamConfig) -> Result<(), NnError> {
        if grads.config != params.config || self.m.config != params.config {
            return Err(NnError::InvalidConfig("optimizer state does not match the model".into()));
        }
        self.step += 1;
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            adam_update(&mut p.data, &g.data, &mut m.data, &mut v.data, self.step, cfg);
        }
        if !params.is_finite() {
            return Err(NnError::NonFinite("parameter"));
        }
        Ok(())
    }
}
