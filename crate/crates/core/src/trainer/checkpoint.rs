use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domains::parse_key_values;
use crate::error::{Error, Result};
use crate::networks::{Module, Param};
use crate::tensor::{ctns, Tensor};

use super::{AdamState, ModelSpec, TrainState};

const FORMAT: &str = "coopforge-checkpoint-1";

/// A loaded checkpoint: the state plus every manifest entry.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub state: TrainState,
    pub manifest: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

fn save_set(dir: &Path, name: &str, params: &[Param<f32>], moments: &AdamState<f32>) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        ctns::save(&p.tensor, dir.join(format!("{name}.{i:03}.ctns")))?;
        ctns::save(&moments.m[i], dir.join(format!("{name}.m.{i:03}.ctns")))?;
        ctns::save(&moments.v[i], dir.join(format!("{name}.v.{i:03}.ctns")))?;
    }
    Ok(())
}

fn load_set(dir: &Path, name: &str, module: &mut dyn Module<f32>, moments: &mut AdamState<f32>) -> Result<()> {
    let n = module.params().len();
    let load = |kind: &str| -> Result<Vec<Tensor<f32>>> {
        (0..n).map(|i| ctns::load(dir.join(format!("{name}{kind}.{i:03}.ctns")))).collect()
    };
    module.load_params(load("")?)?;
    let (m, v) = (load(".m")?, load(".v")?);
    for (i, p) in module.params().iter().enumerate() {
        if m[i].shape() != p.tensor.shape() || v[i].shape() != p.tensor.shape() {
            return Err(Error::shape("load_checkpoint moments", p.tensor.shape(), m[i].shape()));
        }
    }
    *moments = AdamState { m, v };
    Ok(())
}

/// Writes the state into `dir` (created if needed). `extra` entries are added to the manifest.
pub fn save_checkpoint(dir: &Path, s: &TrainState, extra: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut lines = vec![
        ("format", FORMAT.to_string()),
        ("t", s.t.to_string()),
        ("seed", s.seed.to_string()),
        ("dtype", "f32".into()),
        ("input", s.spec.input.to_string()),
        ("energy_arch", s.spec.energy.to_string()),
        ("translator_arch", s.spec.translator.to_string()),
        ("reference_scale", s.spec.reference_scale.to_string()),
        ("sigma_x", s.gen_x.sigma().to_string()),
        ("sigma_y", s.gen_y.sigma().to_string()),
        ("rng_seed", hex(&s.rng.get_seed())),
        ("rng_stream", s.rng.get_stream().to_string()),
        ("rng_word_pos", s.rng.get_word_pos().to_string()),
    ];
    if let Some((arch, k)) = s.spec.predictor {
        lines.push(("predictor_arch", arch.to_string()));
        lines.push(("k", k.to_string()));
    }
    lines.extend(extra.iter().map(|(k, v)| (*k, v.clone())));
    let mut text = String::new();
    for (k, v) in lines {
        if v.contains('\n') || v.contains('#') {
            return Err(Error::invalid(format!("manifest value for `{k}` must be a single plain line")));
        }
        text.push_str(&format!("{k}={v}\n"));
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let m = &s.moments;
    save_set(dir, "theta_x", s.ebm_x.params(), &m.ebm_x)?;
    save_set(dir, "theta_y", s.ebm_y.params(), &m.ebm_y)?;
    save_set(dir, "alpha_x", s.gen_x.params(), &m.gen_x)?;
    save_set(dir, "alpha_y", s.gen_y.params(), &m.gen_y)?;
    if let (Some(p), Some(mo)) = (&s.pred_x, &m.pred_x) {
        save_set(dir, "rho_x", p.params(), mo)?;
    }
    if let (Some(p), Some(mo)) = (&s.pred_y, &m.pred_y) {
        save_set(dir, "rho_y", p.params(), mo)?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = parse_key_values(&text)?;
    let get = |k: &str| -> Result<&str> {
        manifest
            .get(k)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Config(format!("{}: missing `{k}`", path.display())))
    };
    let parse_err = |k: &str| Error::Config(format!("{}: bad value for `{k}`", path.display()));
    if get("format")? != FORMAT {
        return Err(Error::Config(format!("{}: unsupported checkpoint format", path.display())));
    }
    if get("dtype")? != "f32" {
        return Err(parse_err("dtype"));
    }
    let predictor = match manifest.get("predictor_arch") {
        Some(a) => Some((a.parse()?, get("k")?.parse().map_err(|_| parse_err("k"))?)),
        None => None,
    };
    let spec = ModelSpec {
        input: get("input")?.parse()?,
        energy: get("energy_arch")?.parse()?,
        translator: get("translator_arch")?.parse()?,
        predictor,
        reference_scale: get("reference_scale")?.parse().map_err(|_| parse_err("reference_scale"))?,
    };
    let seed = get("seed")?.parse().map_err(|_| parse_err("seed"))?;
    let mut s = TrainState::new(spec, seed)?;
    s.t = get("t")?.parse().map_err(|_| parse_err("t"))?;
    let mut rng = ChaCha8Rng::from_seed(unhex(get("rng_seed")?).ok_or_else(|| parse_err("rng_seed"))?);
    rng.set_stream(get("rng_stream")?.parse().map_err(|_| parse_err("rng_stream"))?);
    rng.set_word_pos(get("rng_word_pos")?.parse().map_err(|_| parse_err("rng_word_pos"))?);
    s.rng = rng;
    s.gen_x.set_sigma(get("sigma_x")?.parse().map_err(|_| parse_err("sigma_x"))?);
    s.gen_y.set_sigma(get("sigma_y")?.parse().map_err(|_| parse_err("sigma_y"))?);

    let m = &mut s.moments;
    load_set(dir, "theta_x", &mut s.ebm_x, &mut m.ebm_x)?;
    load_set(dir, "theta_y", &mut s.ebm_y, &mut m.ebm_y)?;
    load_set(dir, "alpha_x", &mut s.gen_x, &mut m.gen_x)?;
    load_set(dir, "alpha_y", &mut s.gen_y, &mut m.gen_y)?;
    if let (Some(p), Some(mo)) = (s.pred_x.as_mut(), m.pred_x.as_mut()) {
        load_set(dir, "rho_x", p, mo)?;
    }
    if let (Some(p), Some(mo)) = (s.pred_y.as_mut(), m.pred_y.as_mut()) {
        load_set(dir, "rho_y", p, mo)?;
    }
    Ok(Checkpoint { state: s, manifest })
}
