//! Alternating MCMC teaching.
//!
//! Naming: `gen_x` is the translator that produces X-domain samples (Y to X),
//! `gen_y` produces Y-domain samples (X to Y). `ebm_x` and `ebm_y` are the energy
//! models of the two domains.

mod adam;
mod checkpoint;
mod config;
mod eval;
mod run;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domains::{DataKind, DomainDataset};
use crate::error::{Error, Result};
use crate::langevin::{revise, revise_chains, LangevinConfig};
use crate::networks::{
    Direction, EnergyArch, EnergyModel, InputSpec, Module, PredictorArch, TemporalPredictor, Translator,
    TranslatorArch,
};
use crate::objectives::{
    clip_frames_flat, cycle_loss_node, ebm_grad, sequence_parts_node, teach_loss_node, LossWeights, SequenceBatch,
    SequenceBound, SequenceLossParts,
};
use crate::tensor::{Graph, Tensor};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{default_step_size, RunConfig, CONFIG_KEYS};
pub use eval::{EvalRow, Evaluator, METRICS_HEADER};
pub use run::{render_grid, train, translate_sequence, TrainOutcome};

/// Reference scale used for image domains.
pub const IMAGE_REFERENCE_SCALE: f64 = 0.016;
/// Reference scale used for point domains.
pub const POINT_REFERENCE_SCALE: f64 = 1.0;

/// Architecture of all networks in a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input: InputSpec,
    pub energy: EnergyArch,
    pub translator: TranslatorArch,
    /// Present for sequence runs, with the history length `k`.
    pub predictor: Option<(PredictorArch, usize)>,
    pub reference_scale: f64,
}

impl ModelSpec {
    pub fn desk(input: InputSpec, sequence_k: Option<usize>) -> Self {
        let reference_scale = match input {
            InputSpec::Points { .. } => POINT_REFERENCE_SCALE,
            InputSpec::Images { .. } => IMAGE_REFERENCE_SCALE,
        };
        Self {
            input,
            energy: EnergyArch::default_for(&input),
            translator: TranslatorArch::default_for(&input),
            predictor: sequence_k.map(|k| (PredictorArch::default_for(&input), k)),
            reference_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch: usize,
    /// Its `seed` is ignored; per-iteration seeds derive from `seed` below.
    pub langevin: LangevinConfig,
    pub lr_theta_x: f64,
    pub lr_theta_y: f64,
    pub lr_alpha_x: f64,
    pub lr_alpha_y: f64,
    pub lr_rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weights: LossWeights,
    /// Adds `lambda_cyc` times the cycle loss to the sequence objective.
    pub sequence_cycle: bool,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    pub seed: u64,
    /// Fills the `seconds` metrics column; off keeps logs byte-identical.
    pub wall_clock: bool,
    /// Worker threads for the two Langevin revisions.
    pub threads: usize,
    /// Examples per grid image.
    pub grid_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch: 1,
            langevin: LangevinConfig::images(),
            lr_theta_x: 2e-4,
            lr_theta_y: 2e-4,
            lr_alpha_x: 2e-4,
            lr_alpha_y: 2e-4,
            lr_rho: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weights: LossWeights::default(),
            sequence_cycle: false,
            eval_every: 100,
            checkpoint_every: 500,
            seed: 0,
            wall_clock: false,
            threads: 1,
            grid_samples: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.langevin.validate()?;
        self.weights.validate()?;
        if self.iterations == 0 || self.batch == 0 || self.eval_every == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("iterations, batch, eval_every and checkpoint_every must be positive".into()));
        }
        for (k, v) in [
            ("lr_theta_x", self.lr_theta_x),
            ("lr_theta_y", self.lr_theta_y),
            ("lr_alpha_x", self.lr_alpha_x),
            ("lr_alpha_y", self.lr_alpha_y),
            ("lr_rho", self.lr_rho),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut z = 0x243f_6a88_85a3_08d3u64;
    for &p in parts {
        z ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(z << 6).wrapping_add(z >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// Optimizer moments of every parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub ebm_x: AdamState<f32>,
    pub ebm_y: AdamState<f32>,
    pub gen_x: AdamState<f32>,
    pub gen_y: AdamState<f32>,
    pub pred_x: Option<AdamState<f32>>,
    pub pred_y: Option<AdamState<f32>>,
}

/// Everything that changes during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub spec: ModelSpec,
    pub ebm_x: EnergyModel<f32>,
    pub ebm_y: EnergyModel<f32>,
    /// Y to X.
    pub gen_x: Translator<f32>,
    /// X to Y.
    pub gen_y: Translator<f32>,
    pub pred_x: Option<TemporalPredictor<f32>>,
    pub pred_y: Option<TemporalPredictor<f32>>,
    pub moments: Moments,
    /// Completed iterations.
    pub t: u64,
    pub rng: ChaCha8Rng,
    pub seed: u64,
}

impl TrainState {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let s = |i: u64| mix_seed(&[seed, i]);
        let ebm = |i| EnergyModel::new(spec.input, spec.energy.clone(), spec.reference_scale, s(i));
        let ebm_x = ebm(1)?;
        let ebm_y = ebm(2)?;
        let gen_x = Translator::new(spec.input, spec.translator, Direction::YToX, s(3))?;
        let gen_y = Translator::new(spec.input, spec.translator, Direction::XToY, s(4))?;
        let (pred_x, pred_y) = match spec.predictor {
            Some((arch, k)) => (
                Some(TemporalPredictor::new(spec.input, arch, k, s(5))?),
                Some(TemporalPredictor::new(spec.input, arch, k, s(6))?),
            ),
            None => (None, None),
        };
        let moments = Moments {
            ebm_x: AdamState::zeros_like(ebm_x.params()),
            ebm_y: AdamState::zeros_like(ebm_y.params()),
            gen_x: AdamState::zeros_like(gen_x.params()),
            gen_y: AdamState::zeros_like(gen_y.params()),
            pred_x: pred_x.as_ref().map(|p| AdamState::zeros_like(p.params())),
            pred_y: pred_y.as_ref().map(|p| AdamState::zeros_like(p.params())),
        };
        Ok(Self {
            spec,
            ebm_x,
            ebm_y,
            gen_x,
            gen_y,
            pred_x,
            pred_y,
            moments,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0])),
            seed,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.ebm_x.is_finite()
            && self.ebm_y.is_finite()
            && self.gen_x.is_finite()
            && self.gen_y.is_finite()
            && self.pred_x.as_ref().is_none_or(|p| p.is_finite())
            && self.pred_y.as_ref().is_none_or(|p| p.is_finite())
    }

    /// Every parameter tensor and moment, in a fixed order, for bitwise comparison.
    pub fn all_tensors(&self) -> Vec<&Tensor<f32>> {
        let mut out: Vec<&Tensor<f32>> = Vec::new();
        for p in [self.ebm_x.params(), self.ebm_y.params(), self.gen_x.params(), self.gen_y.params()] {
            out.extend(p.iter().map(|p| &p.tensor));
        }
        for p in [&self.pred_x, &self.pred_y].into_iter().flatten() {
            out.extend(p.params().iter().map(|p| &p.tensor));
        }
        let m = &self.moments;
        for s in [&m.ebm_x, &m.ebm_y, &m.gen_x, &m.gen_y].into_iter().chain(m.pred_x.iter()).chain(m.pred_y.iter()) {
            out.extend(s.m.iter().chain(&s.v));
        }
        out
    }

    /// Bitwise equality of parameters, moments, counter and RNG position.
    pub fn bits_eq(&self, other: &Self) -> bool {
        let a = self.all_tensors();
        let b = other.all_tensors();
        self.t == other.t
            && self.rng == other.rng
            && a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| x.bits_eq(y))
    }
}

/// Scalars observed during one iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterStats {
    pub teach_x: f64,
    pub teach_y: f64,
    /// Cycle loss (zero in sequence runs unless enabled).
    pub cycle: f64,
    pub energy_init: f64,
    pub energy_revised: f64,
    /// Components of the sequence objective, for sequence runs.
    pub sequence: Option<SequenceLossParts<f64>>,
    /// L2 norm of the translator gradients, both sets together.
    pub translator_grad_norm: f64,
}

/// Seed of the Langevin noise of iteration `t` for `domain` (0 = X, 1 = Y).
pub fn langevin_seed(seed: u64, t: u64, domain: u64) -> u64 {
    mix_seed(&[seed, 0x1a17, t, domain])
}

fn revise_pair(
    cfg: &TrainConfig,
    xs: (&Tensor<f32>, &EnergyModel<f32>, LangevinConfig),
    ys: (&Tensor<f32>, &EnergyModel<f32>, LangevinConfig),
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    if cfg.threads > 1 {
        std::thread::scope(|s| {
            let hx = s.spawn(|| revise(xs.0, xs.1, &xs.2));
            let ry = revise(ys.0, ys.1, &ys.2);
            let rx = hx.join().map_err(|_| Error::invalid("langevin worker panicked"))?;
            Ok((rx?, ry?))
        })
    } else {
        Ok((revise(xs.0, xs.1, &xs.2)?, revise(ys.0, ys.1, &ys.2)?))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn finite_or(phase: &'static str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::NonFinite { phase })
    }
}

fn collect_grads(g: &Graph<f32>, ids: &[crate::tensor::NodeId]) -> Vec<Vec<f32>> {
    ids.iter().map(|&id| g.grad(id).expect("tracked parameter").to_vec()).collect()
}

fn grad_norm(sets: &[&[Vec<f32>]]) -> f64 {
    sets.iter()
        .flat_map(|s| s.iter())
        .flat_map(|v| v.iter())
        .map(|&g| (g as f64) * (g as f64))
        .sum::<f64>()
        .sqrt()
}

/// Langevin revision plus both EBM updates; returns `(x, x_revised, y, y_revised)`
/// and records energies in `stats`.
#[allow(clippy::too_many_arguments)]
fn revise_and_update_ebms(
    s: &mut TrainState,
    cfg: &TrainConfig,
    x: &Tensor<f32>,
    x_init: &Tensor<f32>,
    y: &Tensor<f32>,
    y_init: &Tensor<f32>,
    t_next: u64,
    stats: &mut IterStats,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let lx = cfg.langevin.with_seed(langevin_seed(cfg.seed, s.t, 0));
    let ly = cfg.langevin.with_seed(langevin_seed(cfg.seed, s.t, 1));
    let (x_rev, y_rev) =
        revise_pair(cfg, (x_init, &s.ebm_x, lx), (y_init, &s.ebm_y, ly)).map_err(|e| e.in_phase("langevin"))?;

    let e_init = [mean(&s.ebm_x.energies(x_init)?), mean(&s.ebm_y.energies(y_init)?)];
    let e_rev = [mean(&s.ebm_x.energies(&x_rev)?), mean(&s.ebm_y.energies(&y_rev)?)];
    stats.energy_init = mean(&e_init);
    stats.energy_revised = mean(&e_rev);

    let ascend = |grads: Vec<Vec<f32>>| -> Vec<Vec<f32>> {
        grads.into_iter().map(|g| g.into_iter().map(|v| -v).collect()).collect()
    };
    let gx = ebm_grad(&s.ebm_x, x, &x_rev).map_err(|e| e.in_phase("ebm"))?;
    s.moments.ebm_x.step(s.ebm_x.params_mut(), &ascend(gx), &cfg.adam(cfg.lr_theta_x), t_next)?;
    let gy = ebm_grad(&s.ebm_y, y, &y_rev).map_err(|e| e.in_phase("ebm"))?;
    s.moments.ebm_y.step(s.ebm_y.params_mut(), &ascend(gy), &cfg.adam(cfg.lr_theta_y), t_next)?;
    finite_or("ebm", s.ebm_x.is_finite() && s.ebm_y.is_finite())?;
    Ok((x_rev, y_rev))
}

fn image_iteration(s: &mut TrainState, dx: &DomainDataset, dy: &DomainDataset, cfg: &TrainConfig) -> Result<IterStats> {
    let t_next = s.t + 1;
    let mut stats = IterStats::default();
    let y = dy.sample(&mut s.rng, cfg.batch);
    let x_init = s.gen_x.translate(&y).map_err(|e| e.in_phase("translate"))?;
    let x = dx.sample(&mut s.rng, cfg.batch);
    let y_init = s.gen_y.translate(&x).map_err(|e| e.in_phase("translate"))?;

    let (x_rev, y_rev) = revise_and_update_ebms(s, cfg, &x, &x_init, &y, &y_init, t_next, &mut stats)?;

    // Both translators step from the same phase-start snapshot.
    let mut g = Graph::new();
    let px = s.gen_x.bind(&mut g, true);
    let py = s.gen_y.bind(&mut g, true);
    let tx = teach_loss_node(&mut g, &s.gen_x, &px, &y, &x_rev)?;
    let ty = teach_loss_node(&mut g, &s.gen_y, &py, &x, &y_rev)?;
    let cyc = cycle_loss_node(&mut g, (&s.gen_y, &py), (&s.gen_x, &px), &x, &y)?;
    let teach = g.add(tx, ty)?;
    let weighted = g.scale(cyc, cfg.weights.lambda_cyc)?;
    let total = g.add(teach, weighted)?;
    g.backward(total).map_err(|e| e.in_phase("translator"))?;
    stats.teach_x = g.value(tx).item() as f64;
    stats.teach_y = g.value(ty).item() as f64;
    stats.cycle = g.value(cyc).item() as f64;
    finite_or("translator", g.value(total).is_finite())?;
    let gx = collect_grads(&g, px.ids());
    let gy = collect_grads(&g, py.ids());
    stats.translator_grad_norm = grad_norm(&[&gx, &gy]);
    s.moments.gen_x.step(s.gen_x.params_mut(), &gx, &cfg.adam(cfg.lr_alpha_x), t_next)?;
    s.moments.gen_y.step(s.gen_y.params_mut(), &gy, &cfg.adam(cfg.lr_alpha_y), t_next)?;
    finite_or("translator", s.gen_x.is_finite() && s.gen_y.is_finite())?;
    Ok(stats)
}

fn sequence_iteration(
    s: &mut TrainState,
    dx: &DomainDataset,
    dy: &DomainDataset,
    cfg: &TrainConfig,
) -> Result<IterStats> {
    let k = match s.spec.predictor {
        Some((_, k)) => k,
        None => return Err(Error::invalid("sequence training needs temporal predictors")),
    };
    let t_next = s.t + 1;
    let mut stats = IterStats::default();
    let clips_y = dy.sample_clips(&mut s.rng, cfg.batch, k)?;
    let y = clip_frames_flat(&clips_y)?;
    let x_init = s.gen_x.translate(&y).map_err(|e| e.in_phase("translate"))?;
    let clips_x = dx.sample_clips(&mut s.rng, cfg.batch, k)?;
    let x = clip_frames_flat(&clips_x)?;
    let y_init = s.gen_y.translate(&x).map_err(|e| e.in_phase("translate"))?;

    let (x_rev, y_rev) = revise_and_update_ebms(s, cfg, &x, &x_init, &y, &y_init, t_next, &mut stats)?;

    let (pred_x, pred_y) = (s.pred_x.as_ref().unwrap(), s.pred_y.as_ref().unwrap());
    let batch = SequenceBatch {
        gen_x: &s.gen_x,
        gen_y: &s.gen_y,
        pred_x,
        pred_y,
        clips_x: &clips_x,
        clips_y: &clips_y,
        teach_x: (&y, &x_rev),
        teach_y: (&x, &y_rev),
    };
    let mut g = Graph::new();
    let p = SequenceBound {
        gen_x: s.gen_x.bind(&mut g, true),
        gen_y: s.gen_y.bind(&mut g, true),
        pred_x: pred_x.bind(&mut g, true),
        pred_y: pred_y.bind(&mut g, true),
    };
    let parts = sequence_parts_node(&mut g, &batch, &p)?;
    let mut total = parts.combine_node(&mut g, &cfg.weights)?;
    if cfg.sequence_cycle {
        let cyc = cycle_loss_node(&mut g, (&s.gen_y, &p.gen_y), (&s.gen_x, &p.gen_x), &x, &y)?;
        stats.cycle = g.value(cyc).item() as f64;
        let w = g.scale(cyc, cfg.weights.lambda_cyc)?;
        total = g.add(total, w)?;
    }
    g.backward(total).map_err(|e| e.in_phase("translator"))?;
    finite_or("translator", g.value(total).is_finite())?;
    let values = parts.values(&g);
    stats.teach_x = values.teach_x;
    stats.teach_y = values.teach_y;
    stats.sequence = Some(values);
    let gx = collect_grads(&g, p.gen_x.ids());
    let gy = collect_grads(&g, p.gen_y.ids());
    let rx = collect_grads(&g, p.pred_x.ids());
    let ry = collect_grads(&g, p.pred_y.ids());
    stats.translator_grad_norm = grad_norm(&[&gx, &gy]);
    s.moments.gen_x.step(s.gen_x.params_mut(), &gx, &cfg.adam(cfg.lr_alpha_x), t_next)?;
    s.moments.gen_y.step(s.gen_y.params_mut(), &gy, &cfg.adam(cfg.lr_alpha_y), t_next)?;
    let rho = cfg.adam(cfg.lr_rho);
    s.moments.pred_x.as_mut().unwrap().step(s.pred_x.as_mut().unwrap().params_mut(), &rx, &rho, t_next)?;
    s.moments.pred_y.as_mut().unwrap().step(s.pred_y.as_mut().unwrap().params_mut(), &ry, &rho, t_next)?;
    finite_or("translator", s.is_finite())?;
    Ok(stats)
}

/// One iteration of alternating MCMC teaching. On error the state is unchanged.
pub fn train_iteration(
    state: &mut TrainState,
    dx: &DomainDataset,
    dy: &DomainDataset,
    cfg: &TrainConfig,
) -> Result<IterStats> {
    if dx.is_empty() || dy.is_empty() {
        return Err(Error::invalid("training needs non-empty datasets"));
    }
    let mut next = state.clone();
    let stats = match dx.kind() {
        DataKind::Sequences => sequence_iteration(&mut next, dx, dy, cfg)?,
        _ => image_iteration(&mut next, dx, dy, cfg)?,
    };
    next.t += 1;
    *state = next;
    Ok(stats)
}

/// Revises translator outputs of a single frame batch; exposed for evaluation.
pub fn translate_and_revise(
    gen: &Translator<f32>,
    ebm: &EnergyModel<f32>,
    input: &Tensor<f32>,
    langevin: &LangevinConfig,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let init = gen.translate(input)?;
    let chains: Vec<u64> = (0..init.batch_len() as u64).collect();
    let revised = revise_chains(&init, ebm, langevin, &chains)?;
    Ok((init, revised))
}
