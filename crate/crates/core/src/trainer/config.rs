use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::domains::{parse_key_values, DataKind, DomainPair};
use crate::error::{Error, Result};
use crate::langevin::LangevinConfig;
use crate::metrics::FeatureMap;
use crate::objectives::LossWeights;

use super::{ModelSpec, TrainConfig};

/// Keys accepted in a run config besides the `x.*` / `y.*` dataset keys.
pub const CONFIG_KEYS: &[&str] = &[
    "iterations",
    "batch",
    "langevin_steps",
    "step_size",
    "noise_scale",
    "lr_theta_x",
    "lr_theta_y",
    "lr_alpha_x",
    "lr_alpha_y",
    "lr_rho",
    "beta1",
    "beta2",
    "eps",
    "lambda_cyc",
    "lambda1",
    "lambda2",
    "k",
    "seed",
    "eval_every",
    "checkpoint_every",
    "sequence_cycle",
    "wall_clock",
    "threads",
    "grid_samples",
    "energy_arch",
    "translator_arch",
    "predictor_arch",
    "reference_scale",
    "feature_map",
    "out",
    "eval_n",
    "paired",
];

/// Default Langevin step size per data kind.
pub fn default_step_size(kind: DataKind) -> f64 {
    match kind {
        DataKind::Images => 0.002,
        DataKind::Points => 0.02,
        DataKind::Sequences => 0.01,
    }
}

/// A parsed run config: training settings, datasets, architectures and output.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub domains: DomainPair,
    pub spec: ModelSpec,
    pub feature_map: FeatureMap,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses config text, then applies `overrides` (same keys) on top.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut map = parse_key_values(text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut descriptor = BTreeMap::new();
        let mut keys = BTreeMap::new();
        for (k, v) in map {
            if k.starts_with("x.") || k.starts_with("y.") || k == "eval_n" || k == "paired" {
                descriptor.insert(k.clone(), v.clone());
            } else if CONFIG_KEYS.contains(&k.as_str()) {
                keys.insert(k.as_str(), v.as_str());
            } else {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        let domains = DomainPair::from_map(&descriptor)?;
        let kind = domains.kind();

        fn val<V: std::str::FromStr>(keys: &BTreeMap<&str, &str>, k: &str, default: V) -> Result<V> {
            match keys.get(k) {
                None => Ok(default),
                Some(v) => v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{k}`"))),
            }
        }
        let d = TrainConfig::default();
        let k: usize = val(&keys, "k", 2)?;
        if kind == DataKind::Sequences && k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        let mut spec = ModelSpec::desk(domains.frame_spec(), (kind == DataKind::Sequences).then_some(k));
        if let Some(a) = keys.get("energy_arch") {
            spec.energy = a.parse()?;
        }
        if let Some(a) = keys.get("translator_arch") {
            spec.translator = a.parse()?;
        }
        if let Some(a) = keys.get("predictor_arch") {
            match spec.predictor.as_mut() {
                Some(p) => p.0 = a.parse()?,
                None => return Err(Error::Config("predictor_arch is only valid for sequence datasets".into())),
            }
        }
        spec.reference_scale = val(&keys, "reference_scale", spec.reference_scale)?;
        let langevin = LangevinConfig {
            steps: val(&keys, "langevin_steps", 15)?,
            step_size: val(&keys, "step_size", default_step_size(kind))?,
            noise_scale: val(&keys, "noise_scale", 1.0)?,
            seed: 0,
        };
        let lr_alpha_x = val(&keys, "lr_alpha_x", d.lr_alpha_x)?;
        let train = TrainConfig {
            iterations: val(&keys, "iterations", d.iterations)?,
            batch: val(&keys, "batch", d.batch)?,
            langevin,
            lr_theta_x: val(&keys, "lr_theta_x", d.lr_theta_x)?,
            lr_theta_y: val(&keys, "lr_theta_y", d.lr_theta_y)?,
            lr_alpha_x,
            lr_alpha_y: val(&keys, "lr_alpha_y", d.lr_alpha_y)?,
            lr_rho: val(&keys, "lr_rho", d.lr_rho)?,
            beta1: val(&keys, "beta1", d.beta1)?,
            beta2: val(&keys, "beta2", d.beta2)?,
            eps: val(&keys, "eps", d.eps)?,
            weights: LossWeights {
                lambda_cyc: val(&keys, "lambda_cyc", 9.0)?,
                lambda1: val(&keys, "lambda1", 9.0)?,
                lambda2: val(&keys, "lambda2", 9.0)?,
            },
            sequence_cycle: val(&keys, "sequence_cycle", false)?,
            eval_every: val(&keys, "eval_every", d.eval_every)?,
            checkpoint_every: val(&keys, "checkpoint_every", d.checkpoint_every)?,
            seed: val(&keys, "seed", d.seed)?,
            wall_clock: val(&keys, "wall_clock", false)?,
            threads: val(&keys, "threads", 1)?,
            grid_samples: val(&keys, "grid_samples", d.grid_samples)?,
        };
        train.validate()?;
        let feature_map = match keys.get("feature_map") {
            Some(f) => f.parse()?,
            None => FeatureMap::default_for(&domains.frame_spec().item_shape()),
        };
        let out = keys.get("out").map(PathBuf::from);
        Ok(Self { train, domains, spec, feature_map, out })
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = self.domains.to_text();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k}={v}\n"));
        put("iterations", t.iterations.to_string());
        put("batch", t.batch.to_string());
        put("langevin_steps", t.langevin.steps.to_string());
        put("step_size", t.langevin.step_size.to_string());
        put("noise_scale", t.langevin.noise_scale.to_string());
        put("lr_theta_x", t.lr_theta_x.to_string());
        put("lr_theta_y", t.lr_theta_y.to_string());
        put("lr_alpha_x", t.lr_alpha_x.to_string());
        put("lr_alpha_y", t.lr_alpha_y.to_string());
        put("lr_rho", t.lr_rho.to_string());
        put("beta1", t.beta1.to_string());
        put("beta2", t.beta2.to_string());
        put("eps", t.eps.to_string());
        put("lambda_cyc", t.weights.lambda_cyc.to_string());
        put("lambda1", t.weights.lambda1.to_string());
        put("lambda2", t.weights.lambda2.to_string());
        if let Some((arch, k)) = self.spec.predictor {
            put("k", k.to_string());
            put("predictor_arch", arch.to_string());
        }
        put("seed", t.seed.to_string());
        put("eval_every", t.eval_every.to_string());
        put("checkpoint_every", t.checkpoint_every.to_string());
        put("sequence_cycle", t.sequence_cycle.to_string());
        put("wall_clock", t.wall_clock.to_string());
        put("threads", t.threads.to_string());
        put("grid_samples", t.grid_samples.to_string());
        put("energy_arch", self.spec.energy.to_string());
        put("translator_arch", self.spec.translator.to_string());
        put("reference_scale", self.spec.reference_scale.to_string());
        put("feature_map", self.feature_map.to_string());
        if let Some(o) = &self.out {
            put("out", o.display().to_string());
        }
        s
    }
}
