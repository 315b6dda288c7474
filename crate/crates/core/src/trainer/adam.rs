use crate::error::{Error, Result};
use crate::networks::Param;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(2e-4)
    }
}

/// One bias-corrected Adam step on a flat buffer. `t` counts from 1.
pub fn adam_step<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    cfg: &AdamConfig,
    t: u64,
) -> Result<()> {
    let n = param.len();
    if grad.len() != n || m.len() != n || v.len() != n {
        return Err(Error::shape("adam_step", &[n], &[grad.len(), m.len(), v.len()]));
    }
    if t == 0 {
        return Err(Error::invalid("adam_step: step counter starts at 1"));
    }
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..n {
        let g = grad[i].as_f64();
        let mi = cfg.beta1 * m[i].as_f64() + (1.0 - cfg.beta1) * g;
        let vi = cfg.beta2 * v[i].as_f64() + (1.0 - cfg.beta2) * g * g;
        let step = cfg.lr * (mi / c1) / ((vi / c2).sqrt() + cfg.eps);
        m[i] = T::from_f64_lossy(mi);
        v[i] = T::from_f64_lossy(vi);
        param[i] = T::from_f64_lossy(param[i].as_f64() - step);
    }
    Ok(())
}

/// First and second moments for every tensor of one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros_like(params: &[Param<T>]) -> Self {
        let z: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect();
        Self { m: z.clone(), v: z }
    }

    /// Descends along `grads` (one buffer per parameter).
    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Vec<T>], cfg: &AdamConfig, t: u64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::invalid(format!(
                "adam: {} parameters, {} gradients, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, p) in params.iter_mut().enumerate() {
            adam_step(p.tensor.data_mut(), &grads[i], self.m[i].data_mut(), self.v[i].data_mut(), cfg, t)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.v).all(|t| t.is_finite())
    }
}
