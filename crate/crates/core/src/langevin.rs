//! Finite-step Langevin revision of translator outputs toward an energy model.
//!
//! One step is `x <- x - (delta^2 / 2) dE/dx + eta * delta * U` with `U` standard
//! normal. Noise is drawn from a counter-based stream keyed by
//! `(seed, chain, step, coordinate)`, so a chain's noise does not depend on which
//! batch it was revised in.

use crate::error::{Error, Result};
use crate::networks::EnergyModel;
use crate::tensor::{Scalar, Tensor};

/// States with any coordinate above this magnitude abort the revision.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LangevinConfig {
    pub steps: usize,
    pub step_size: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl LangevinConfig {
    pub fn new(steps: usize, step_size: f64, noise_scale: f64, seed: u64) -> Result<Self> {
        let cfg = Self { steps, step_size, noise_scale, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 15 steps of size 0.002 with full noise.
    pub fn images() -> Self {
        Self { steps: 15, step_size: 0.002, noise_scale: 1.0, seed: 0 }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(0.0..=1.0).contains(&self.noise_scale) {
            return Err(Error::Config(format!("noise_scale must lie in [0, 1], got {}", self.noise_scale)));
        }
        Ok(())
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Standard normal noise addressed by `(step, coordinate)` within one chain.
#[derive(Clone, Copy, Debug)]
pub struct NoiseStream {
    key: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, chain: u64) -> Self {
        Self { key: mix(mix(seed.wrapping_add(GOLDEN)) ^ chain.wrapping_mul(GOLDEN)) }
    }

    pub fn normal(&self, step: u64, coord: u64) -> f64 {
        let h = mix(mix(self.key ^ step.wrapping_mul(0xd1b5_4a32_d192_ed03)) ^ coord);
        let h2 = mix(h ^ GOLDEN);
        // (0, 1] so the log is finite
        let u1 = ((h >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let u2 = (h2 >> 11) as f64 / (1u64 << 53) as f64;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Revises a batch with chains numbered `0..n`.
pub fn revise<T: Scalar>(x0: &Tensor<T>, model: &EnergyModel<T>, cfg: &LangevinConfig) -> Result<Tensor<T>> {
    let chains: Vec<u64> = (0..x0.batch_len() as u64).collect();
    revise_chains(x0, model, cfg, &chains)
}

/// Revises a batch whose entry `i` is chain `chains[i]`.
pub fn revise_chains<T: Scalar>(
    x0: &Tensor<T>,
    model: &EnergyModel<T>,
    cfg: &LangevinConfig,
    chains: &[u64],
) -> Result<Tensor<T>> {
    run(x0, model, cfg, chains, |_, _| Ok(()))
}

/// Like [`revise_chains`], also returning the energy of every chain before each
/// step and after the last one (`steps + 1` rows).
pub fn revise_traced<T: Scalar>(
    x0: &Tensor<T>,
    model: &EnergyModel<T>,
    cfg: &LangevinConfig,
    chains: &[u64],
) -> Result<(Tensor<T>, Vec<Vec<f64>>)> {
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let out = run(x0, model, cfg, chains, |_, x| {
        trace.push(model.energies(x)?);
        Ok(())
    })?;
    trace.push(model.energies(&out)?);
    Ok((out, trace))
}

fn run<T: Scalar>(
    x0: &Tensor<T>,
    model: &EnergyModel<T>,
    cfg: &LangevinConfig,
    chains: &[u64],
    mut observe: impl FnMut(usize, &Tensor<T>) -> Result<()>,
) -> Result<Tensor<T>> {
    cfg.validate()?;
    model.input().check("revise", x0.shape())?;
    if chains.len() != x0.batch_len() {
        return Err(Error::invalid(format!("{} chain ids for a batch of {}", chains.len(), x0.batch_len())));
    }
    if !x0.is_finite() {
        return Err(Error::Divergence { step: 0, max_abs: f64::NAN });
    }
    let drift = cfg.step_size * cfg.step_size / 2.0;
    let noise = cfg.noise_scale * cfg.step_size;
    let streams: Vec<NoiseStream> = chains.iter().map(|&c| NoiseStream::new(cfg.seed, c)).collect();
    let per = x0.numel() / x0.batch_len();
    let mut x = x0.clone();
    x.set_requires_grad(false);
    for step in 0..cfg.steps {
        observe(step, &x)?;
        let (grad, _) = model.energy_grad_x(&x)?;
        let mut max_abs = 0.0f64;
        for (i, (xs, gs)) in x.data_mut().chunks_mut(per).zip(grad.data().chunks(per)).enumerate() {
            for (j, (xv, gv)) in xs.iter_mut().zip(gs).enumerate() {
                let mut v = xv.as_f64() - drift * gv.as_f64();
                if noise != 0.0 {
                    v += noise * streams[i].normal(step as u64, j as u64);
                }
                *xv = T::from_f64(v).unwrap_or_else(T::nan);
                let a = v.abs();
                if !(a <= max_abs) {
                    max_abs = a;
                }
            }
        }
        if !(max_abs <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step, max_abs });
        }
    }
    Ok(x)
}
