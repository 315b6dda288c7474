//! Seeded two-domain benchmarks and dataset I/O.
//!
//! A dataset is fully described by its [`Generator`]; the text form of a
//! generator is a list of `key=value` lines, and a [`DomainPair`] prefixes the
//! two domains' keys with `x.` and `y.`.

mod generators;
pub mod ppm;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::networks::InputSpec;
use crate::objectives::clip_frames_flat;
use crate::tensor::{ctns, Tensor};

pub use generators::{
    centroid, dot_trajectories, gen_moving_dot, gen_ring, gen_shapes, render_dot, Appearance, MotionStyle, Palette,
    RingParams, ShapeKind, DOT_MARGIN,
};
pub use ppm::{decode_ppm, encode_ppm, load_ppm, save_ppm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Points,
    Images,
    Sequences,
}

/// Parameters and seed of one procedural domain.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Ring { n: usize, params: RingParams, seed: u64 },
    Shapes { n: usize, side: usize, shape: ShapeKind, palette: Palette, seed: u64 },
    MovingDot { n: usize, len: usize, side: usize, appearance: Appearance, motion: MotionStyle, speed: f64, seed: u64 },
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Generator {
    pub fn kind(&self) -> DataKind {
        match self {
            Generator::Ring { .. } => DataKind::Points,
            Generator::Shapes { .. } => DataKind::Images,
            Generator::MovingDot { .. } => DataKind::Sequences,
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            Generator::Ring { n, .. } | Generator::Shapes { n, .. } | Generator::MovingDot { n, .. } => n,
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            Generator::Ring { seed, .. } | Generator::Shapes { seed, .. } | Generator::MovingDot { seed, .. } => seed,
        }
    }

    /// Same generator with a different size and seed.
    pub fn resized(&self, n_new: usize, seed_new: u64) -> Self {
        let mut g = self.clone();
        match &mut g {
            Generator::Ring { n, seed, .. } | Generator::Shapes { n, seed, .. } | Generator::MovingDot { n, seed, .. } => {
                *n = n_new;
                *seed = seed_new;
            }
        }
        g
    }

    /// Shape of one example (one frame for sequences).
    pub fn frame_spec(&self) -> InputSpec {
        match *self {
            Generator::Ring { .. } => InputSpec::Points { dim: 2 },
            Generator::Shapes { side, palette, .. } => {
                InputSpec::Images { channels: palette.channels(), height: side, width: side }
            }
            Generator::MovingDot { side, .. } => InputSpec::Images { channels: 1, height: side, width: side },
        }
    }

    /// Mode centers and per-mode standard deviation, for ring domains.
    pub fn modes(&self) -> Option<(Vec<Vec<f64>>, f64)> {
        match self {
            Generator::Ring { params, .. } => Some((params.centers(), params.scaled_std())),
            _ => None,
        }
    }

    pub fn generate(&self) -> Result<DomainDataset> {
        let data = match *self {
            Generator::Ring { n, ref params, seed } => gen_ring(n, params, seed)?,
            Generator::Shapes { n, side, shape, palette, seed } => gen_shapes(n, side, shape, palette, seed)?,
            Generator::MovingDot { n, len, side, appearance, motion, speed, seed } => {
                gen_moving_dot(n, len, side, appearance, motion, speed, seed)?
            }
        };
        Ok(DomainDataset { generator: self.clone(), data: data.cast() })
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        match self {
            Generator::Ring { n, params, seed } => vec![
                ("kind", "ring".into()),
                ("n", n.to_string()),
                ("modes", params.modes.to_string()),
                ("radius", params.radius.to_string()),
                ("mode_std", params.mode_std.to_string()),
                ("rotation", params.rotation.to_string()),
                ("scale", params.scale.to_string()),
                ("seed", seed.to_string()),
            ],
            Generator::Shapes { n, side, shape, palette, seed } => vec![
                ("kind", "shapes".into()),
                ("n", n.to_string()),
                ("side", side.to_string()),
                ("shape", shape_name(*shape).into()),
                ("palette", palette_name(*palette).into()),
                ("seed", seed.to_string()),
            ],
            Generator::MovingDot { n, len, side, appearance, motion, speed, seed } => vec![
                ("kind", "moving_dot".into()),
                ("n", n.to_string()),
                ("len", len.to_string()),
                ("side", side.to_string()),
                ("appearance", appearance_name(*appearance).into()),
                ("motion", motion_name(*motion).into()),
                ("speed", speed.to_string()),
                ("seed", seed.to_string()),
            ],
        }
    }

    /// Builds a generator from its keys; every key is consumed or an error is returned.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut keys = Keys { map: pairs, used: Vec::new() };
        let g = match keys.req("kind")? {
            "ring" => Generator::Ring {
                n: keys.num("n")?,
                params: RingParams {
                    modes: keys.num("modes")?,
                    radius: keys.num("radius")?,
                    mode_std: keys.num("mode_std")?,
                    rotation: keys.num_or("rotation", 0.0)?,
                    scale: keys.num_or("scale", 1.0)?,
                },
                seed: keys.num("seed")?,
            },
            "shapes" => Generator::Shapes {
                n: keys.num("n")?,
                side: keys.num("side")?,
                shape: match keys.req("shape")? {
                    "square" => ShapeKind::Square,
                    "disk" => ShapeKind::Disk,
                    s => return Err(Error::Config(format!("unknown shape `{s}`"))),
                },
                palette: match keys.req("palette")? {
                    "bright" => Palette::Bright,
                    "dark" => Palette::Dark,
                    "red" => Palette::Red,
                    "blue" => Palette::Blue,
                    s => return Err(Error::Config(format!("unknown palette `{s}`"))),
                },
                seed: keys.num("seed")?,
            },
            "moving_dot" => Generator::MovingDot {
                n: keys.num("n")?,
                len: keys.num("len")?,
                side: keys.num("side")?,
                appearance: match keys.req("appearance")? {
                    "box" => Appearance::Box,
                    "blob" => Appearance::Blob,
                    s => return Err(Error::Config(format!("unknown appearance `{s}`"))),
                },
                motion: match keys.get("motion").unwrap_or("bounce") {
                    "bounce" => MotionStyle::Bounce,
                    "still" => MotionStyle::Still,
                    s => return Err(Error::Config(format!("unknown motion `{s}`"))),
                },
                speed: keys.num_or("speed", 1.0)?,
                seed: keys.num("seed")?,
            },
            k => return Err(Error::Config(format!("unknown dataset kind `{k}`"))),
        };
        keys.finish()?;
        Ok(g)
    }
}

fn shape_name(s: ShapeKind) -> &'static str {
    match s {
        ShapeKind::Square => "square",
        ShapeKind::Disk => "disk",
    }
}

fn palette_name(p: Palette) -> &'static str {
    match p {
        Palette::Bright => "bright",
        Palette::Dark => "dark",
        Palette::Red => "red",
        Palette::Blue => "blue",
    }
}

fn appearance_name(a: Appearance) -> &'static str {
    match a {
        Appearance::Box => "box",
        Appearance::Blob => "blob",
    }
}

fn motion_name(m: MotionStyle) -> &'static str {
    match m {
        MotionStyle::Bounce => "bounce",
        MotionStyle::Still => "still",
    }
}

struct Keys<'a> {
    map: &'a BTreeMap<String, String>,
    used: Vec<&'static str>,
}

impl<'a> Keys<'a> {
    fn get(&mut self, k: &'static str) -> Option<&'a str> {
        self.used.push(k);
        self.map.get(k).map(|s| s.as_str())
    }

    fn req(&mut self, k: &'static str) -> Result<&'a str> {
        self.get(k).ok_or_else(|| Error::Config(format!("missing key `{k}`")))
    }

    fn num<V: std::str::FromStr>(&mut self, k: &'static str) -> Result<V> {
        let v = self.req(k)?;
        v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{k}`")))
    }

    fn num_or<V: std::str::FromStr>(&mut self, k: &'static str, default: V) -> Result<V> {
        match self.get(k) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{k}`"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{}`", i + 1, k.trim())));
        }
    }
    Ok(out)
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// A materialized domain: examples shaped `[n, ...]` or clips shaped `[n, len, ...]`.
#[derive(Clone, Debug)]
pub struct DomainDataset {
    pub generator: Generator,
    data: Tensor<f32>,
}

impl DomainDataset {
    pub fn kind(&self) -> DataKind {
        self.generator.kind()
    }

    pub fn len(&self) -> usize {
        self.data.batch_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &Tensor<f32> {
        &self.data
    }

    pub fn frame_spec(&self) -> InputSpec {
        self.generator.frame_spec()
    }

    /// Every example, or every frame of every sequence, as one batch.
    pub fn frames(&self) -> Result<Tensor<f32>> {
        match self.kind() {
            DataKind::Sequences => clip_frames_flat(&self.data),
            _ => Ok(self.data.clone()),
        }
    }

    /// Sequence length, for sequence datasets.
    pub fn seq_len(&self) -> Option<usize> {
        (self.kind() == DataKind::Sequences).then(|| self.data.shape()[1])
    }

    /// `n` examples drawn uniformly with replacement.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Tensor<f32> {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..self.len())).collect();
        self.data.gather(&idx)
    }

    /// `n` clips of `k + 1` consecutive frames, shaped `[n, k + 1, ...frame]`.
    pub fn sample_clips<R: Rng>(&self, rng: &mut R, n: usize, k: usize) -> Result<Tensor<f32>> {
        let len = self
            .seq_len()
            .ok_or_else(|| Error::invalid("clips can only be drawn from sequence datasets"))?;
        if len < k + 1 {
            return Err(Error::invalid(format!("sequences of length {len} are shorter than k + 1 = {}", k + 1)));
        }
        let per: usize = self.data.shape()[2..].iter().product();
        let mut data = Vec::with_capacity(n * (k + 1) * per);
        for _ in 0..n {
            let s = rng.gen_range(0..self.len());
            let t = rng.gen_range(0..=len - (k + 1));
            let at = (s * len + t) * per;
            data.extend_from_slice(&self.data.data()[at..at + (k + 1) * per]);
        }
        let mut shape = vec![n, k + 1];
        shape.extend_from_slice(&self.data.shape()[2..]);
        Tensor::new(shape, data)
    }

    /// All windows of `k + 1` frames of every sequence, in order.
    pub fn all_clips(&self, k: usize) -> Result<Tensor<f32>> {
        let len = self.seq_len().ok_or_else(|| Error::invalid("not a sequence dataset"))?;
        if len < k + 1 {
            return Err(Error::invalid(format!("sequences of length {len} are shorter than k + 1 = {}", k + 1)));
        }
        let per: usize = self.data.shape()[2..].iter().product();
        let windows = len - k;
        let mut data = Vec::with_capacity(self.len() * windows * (k + 1) * per);
        for s in 0..self.len() {
            for t in 0..windows {
                let at = (s * len + t) * per;
                data.extend_from_slice(&self.data.data()[at..at + (k + 1) * per]);
            }
        }
        let mut shape = vec![self.len() * windows, k + 1];
        shape.extend_from_slice(&self.data.shape()[2..]);
        Tensor::new(shape, data)
    }

    /// Writes `{name}.ctns` and `{name}.txt` (the generator) into `dir`.
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        ctns::save(&self.data, dir.join(format!("{name}.ctns")))?;
        let path = dir.join(format!("{name}.txt"));
        fs::write(&path, self.generator.to_string()).map_err(|e| Error::io(&path, e))
    }
}

/// Default size of the held-out evaluation sets.
pub const DEFAULT_EVAL_N: usize = 512;

/// The two domains of a benchmark plus evaluation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainPair {
    pub x: Generator,
    pub y: Generator,
    /// Held-out examples (or sequences) per domain for metrics.
    pub eval_n: usize,
    /// Whether evaluation sets correspond example by example across domains.
    pub paired: bool,
}

impl DomainPair {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&parse_key_values(text)?)
    }

    /// Splits `x.*`, `y.*`, `eval_n` and `paired`; other keys are rejected.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let (mut xs, mut ys) = (BTreeMap::new(), BTreeMap::new());
        let mut eval_n = DEFAULT_EVAL_N;
        let mut paired = false;
        for (k, v) in map {
            if let Some(rest) = k.strip_prefix("x.") {
                xs.insert(rest.to_string(), v.clone());
            } else if let Some(rest) = k.strip_prefix("y.") {
                ys.insert(rest.to_string(), v.clone());
            } else if k == "eval_n" {
                eval_n = v.parse().map_err(|_| Error::Config(format!("bad eval_n `{v}`")))?;
            } else if k == "paired" {
                paired = v.parse().map_err(|_| Error::Config(format!("bad paired `{v}`")))?;
            } else {
                return Err(Error::Config(format!("unknown descriptor key `{k}`")));
            }
        }
        let pair = Self { x: Generator::from_pairs(&xs)?, y: Generator::from_pairs(&ys)?, eval_n, paired };
        pair.validate()?;
        Ok(pair)
    }

    fn validate(&self) -> Result<()> {
        if self.x.kind() != self.y.kind() {
            return Err(Error::Config("both domains must be of the same kind".into()));
        }
        if self.x.frame_spec() != self.y.frame_spec() {
            return Err(Error::Config(format!(
                "domain shapes differ: {} vs {}",
                self.x.frame_spec(),
                self.y.frame_spec()
            )));
        }
        if self.eval_n == 0 {
            return Err(Error::Config("eval_n must be positive".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> DataKind {
        self.x.kind()
    }

    pub fn frame_spec(&self) -> InputSpec {
        self.x.frame_spec()
    }

    pub fn generate(&self) -> Result<(DomainDataset, DomainDataset)> {
        Ok((self.x.generate()?, self.y.generate()?))
    }

    /// Held-out generators with fresh seeds derived from the training seeds.
    /// Paired descriptors give both domains the X seed.
    pub fn eval_generators(&self) -> (Generator, Generator) {
        let sx = mix_seed(self.x.seed(), 0xe7a1);
        let sy = if self.paired { sx } else { mix_seed(self.y.seed(), 0xe7a1) };
        (self.x.resized(self.eval_n, sx), self.y.resized(self.eval_n, sy))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (prefix, g) in [("x", &self.x), ("y", &self.y)] {
            for (k, v) in g.to_pairs() {
                s.push_str(&format!("{prefix}.{k}={v}\n"));
            }
        }
        s.push_str(&format!("eval_n={}\npaired={}\n", self.eval_n, self.paired));
        s
    }
}
