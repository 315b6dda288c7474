use std::fmt;
use std::str::FromStr;

use super::{dense, lrelu, norm, parse_knobs, parse_usize, Bound, InputSpec, Module, Param, ParamBuilder};
use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Scalar, Tensor};

/// Which way a translator maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    XToY,
    YToX,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::XToY => Direction::YToX,
            Direction::YToX => Direction::XToY,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::XToY => "x2y",
            Direction::YToX => "y2x",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x2y" | "xy" => Ok(Direction::XToY),
            "y2x" | "yx" => Ok(Direction::YToX),
            _ => Err(Error::Config(format!("direction must be x2y or y2x, got `{s}`"))),
        }
    }
}

/// Encoder / residual body / decoder layout of a translator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TranslatorArch {
    /// Dense lift to `width`, `blocks` two-layer residual blocks, dense projection back.
    Mlp { width: usize, blocks: usize },
    /// Conv encoder (`width`, then `2*width` at half resolution), residual blocks,
    /// transposed-conv decoder.
    Conv { width: usize, blocks: usize },
}

impl TranslatorArch {
    pub fn default_for(input: &InputSpec) -> Self {
        match input {
            InputSpec::Points { .. } => TranslatorArch::Mlp { width: 128, blocks: 2 },
            InputSpec::Images { .. } => TranslatorArch::Conv { width: 8, blocks: 2 },
        }
    }

    /// The full-size recipe with nine residual blocks.
    pub fn paper_scale_images() -> Self {
        TranslatorArch::Conv { width: 64, blocks: 9 }
    }
}

impl fmt::Display for TranslatorArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TranslatorArch::Mlp { width, blocks } => write!(f, "mlp:{width};blocks={blocks}"),
            TranslatorArch::Conv { width, blocks } => write!(f, "conv:{width};blocks={blocks}"),
        }
    }
}

impl FromStr for TranslatorArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| Error::Config(format!("bad translator arch `{s}`")))?;
        let (body, knobs) = rest.split_once(';').unwrap_or((rest, ""));
        let width = parse_usize(body, "width")?;
        let mut blocks = 2;
        for (k, v) in parse_knobs(knobs)? {
            match k {
                "blocks" => blocks = parse_usize(v, "blocks")?,
                _ => return Err(Error::Config(format!("unknown translator knob `{k}`"))),
            }
        }
        match kind {
            "mlp" => Ok(TranslatorArch::Mlp { width, blocks }),
            "conv" => Ok(TranslatorArch::Conv { width, blocks }),
            _ => Err(Error::Config(format!("bad translator arch `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
enum Layout {
    Mlp {
        lift: (usize, usize),
        blocks: Vec<[(usize, usize); 2]>,
        project: (usize, usize),
    },
    Conv {
        enc1: (usize, (usize, usize)),
        enc2: (usize, (usize, usize)),
        blocks: Vec<[(usize, (usize, usize)); 2]>,
        dec: (usize, (usize, usize)),
        out: (usize, usize),
    },
}

/// Translator `G`: maps a batch from one domain to the other, same shape.
///
/// The whole network is a residual around its input and the projection layer
/// plus the last layer of every residual block start at zero, so a fresh
/// translator is the identity map.
#[derive(Clone, Debug)]
pub struct Translator<T> {
    input: InputSpec,
    arch: TranslatorArch,
    direction: Direction,
    sigma: f64,
    params: Vec<Param<T>>,
    layout: Layout,
}

impl<T: Scalar> Translator<T> {
    pub fn new(input: InputSpec, arch: TranslatorArch, direction: Direction, seed: u64) -> Result<Self> {
        let mut pb = ParamBuilder::new(seed);
        let layout = match (arch, input) {
            (TranslatorArch::Mlp { width, blocks }, InputSpec::Points { dim }) => {
                let lift = pb.dense("lift", dim, width, false);
                let blocks = (0..blocks)
                    .map(|i| {
                        [
                            pb.dense(&format!("block{i}.a"), width, width, false),
                            pb.dense(&format!("block{i}.b"), width, width, true),
                        ]
                    })
                    .collect();
                let project = pb.dense("project", width, dim, true);
                Layout::Mlp { lift, blocks, project }
            }
            (TranslatorArch::Conv { width, blocks }, InputSpec::Images { channels, height, width: w }) => {
                if height % 2 != 0 || w % 2 != 0 {
                    return Err(Error::invalid(format!("translator needs even image sides, got {height}x{w}")));
                }
                let enc1 = (pb.conv("enc1", width, channels, 3, false), pb.norm("enc1.norm", width));
                let enc2 = (pb.conv("enc2", 2 * width, width, 3, false), pb.norm("enc2.norm", 2 * width));
                let blocks = (0..blocks)
                    .map(|i| {
                        [
                            (pb.conv(&format!("block{i}.a"), 2 * width, 2 * width, 3, false), pb.norm(&format!("block{i}.a.norm"), 2 * width)),
                            (pb.conv(&format!("block{i}.b"), 2 * width, 2 * width, 3, true), pb.norm(&format!("block{i}.b.norm"), 2 * width)),
                        ]
                    })
                    .collect();
                let dec = (pb.conv_transpose("dec", 2 * width, width, 3), pb.norm("dec.norm", width));
                let out = (pb.conv("out", channels, width, 3, true), pb.bias("out", channels));
                Layout::Conv { enc1, enc2, blocks, dec, out }
            }
            _ => return Err(Error::invalid(format!("translator arch {arch} does not fit input {input}"))),
        };
        Ok(Self { input, arch, direction, sigma: 1.0, params: pb.finish(), layout })
    }

    pub fn desk(input: InputSpec, direction: Direction, seed: u64) -> Result<Self> {
        Self::new(input, TranslatorArch::default_for(&input), direction, seed)
    }

    pub fn input(&self) -> InputSpec {
        self.input
    }

    pub fn arch(&self) -> TranslatorArch {
        self.arch
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Nominal residual scale of the generative story. No loss uses it.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, x: NodeId) -> Result<NodeId> {
        self.input.check("translate", g.shape(x))?;
        let residual = match &self.layout {
            Layout::Mlp { lift, blocks, project } => {
                let l = dense(g, p, *lift, x)?;
                let mut h = lrelu(g, l)?;
                for [a, b] in blocks {
                    let r = dense(g, p, *a, h)?;
                    let r = lrelu(g, r)?;
                    let r = dense(g, p, *b, r)?;
                    h = g.add(h, r)?;
                }
                dense(g, p, *project, h)?
            }
            Layout::Conv { enc1, enc2, blocks, dec, out } => {
                let conv_norm = |g: &mut Graph<T>, (w, nb): (usize, (usize, usize)), h: NodeId, stride: usize| -> Result<NodeId> {
                    let c = g.conv2d(h, p.get(w), stride, 1)?;
                    norm(g, p, nb, c)
                };
                let h = conv_norm(g, *enc1, x, 1)?;
                let h = lrelu(g, h)?;
                let h = conv_norm(g, *enc2, h, 2)?;
                let mut h = lrelu(g, h)?;
                for [a, b] in blocks {
                    let r = conv_norm(g, *a, h, 1)?;
                    let r = lrelu(g, r)?;
                    let r = conv_norm(g, *b, r, 1)?;
                    h = g.add(h, r)?;
                }
                let d = g.conv_transpose2d(h, p.get(dec.0), 2, 1, 1)?;
                let d = norm(g, p, dec.1, d)?;
                let d = lrelu(g, d)?;
                let o = g.conv2d(d, p.get(out.0), 1, 1)?;
                g.add_channel_bias(o, p.get(out.1))?
            }
        };
        g.add(x, residual)
    }

    /// Maps a batch without recording gradients. No noise is added.
    pub fn translate(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let yi = g.constant(y.clone());
        let out = self.forward(&mut g, &p, yi)?;
        Ok(g.take(out))
    }
}

impl<T: Scalar> Module<T> for Translator<T> {
    fn params(&self) -> &[Param<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }
}
