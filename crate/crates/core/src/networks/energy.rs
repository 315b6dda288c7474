use std::fmt;
use std::str::FromStr;

use super::{dense, lrelu, parse_knobs, parse_usize, Bound, InputSpec, Module, Param, ParamBuilder};
use crate::error::{Error, Result};
use crate::networks::conv_out;
use crate::tensor::{Graph, NodeId, Scalar, Tensor};

/// One bottom-up convolution of the energy network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Architecture of the negative-energy network `f`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EnergyArch {
    /// Dense layers of the given widths, then a scalar output.
    Mlp { hidden: Vec<usize> },
    /// Convolutions with leaky rectifiers, then a dense head whose outputs are summed.
    Conv { layers: Vec<ConvLayer>, head: usize },
}

impl EnergyArch {
    pub fn desk_points() -> Self {
        EnergyArch::Mlp { hidden: vec![128, 128] }
    }

    pub fn desk_images() -> Self {
        EnergyArch::Conv {
            layers: vec![
                ConvLayer { channels: 32, kernel: 5, stride: 2 },
                ConvLayer { channels: 64, kernel: 3, stride: 2 },
                ConvLayer { channels: 128, kernel: 3, stride: 1 },
            ],
            head: 10,
        }
    }

    /// The full-size image recipe for 256x256 inputs. Constructible, but large.
    pub fn paper_scale_images() -> Self {
        EnergyArch::Conv {
            layers: vec![
                ConvLayer { channels: 64, kernel: 3, stride: 1 },
                ConvLayer { channels: 128, kernel: 4, stride: 2 },
                ConvLayer { channels: 256, kernel: 4, stride: 2 },
                ConvLayer { channels: 512, kernel: 4, stride: 2 },
            ],
            head: 100,
        }
    }

    pub fn default_for(input: &InputSpec) -> Self {
        match input {
            InputSpec::Points { .. } => Self::desk_points(),
            InputSpec::Images { .. } => Self::desk_images(),
        }
    }
}

impl fmt::Display for EnergyArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyArch::Mlp { hidden } => {
                let w: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
                write!(f, "mlp:{}", w.join(","))
            }
            EnergyArch::Conv { layers, head } => {
                let l: Vec<String> =
                    layers.iter().map(|c| format!("{}/{}/{}", c.channels, c.kernel, c.stride)).collect();
                write!(f, "conv:{};head={head}", l.join(","))
            }
        }
    }
}

impl FromStr for EnergyArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| Error::Config(format!("bad energy arch `{s}`")))?;
        let (body, knobs) = rest.split_once(';').unwrap_or((rest, ""));
        match kind {
            "mlp" => Ok(EnergyArch::Mlp {
                hidden: body.split(',').map(|w| parse_usize(w, "width")).collect::<Result<_>>()?,
            }),
            "conv" => {
                let layers = body
                    .split(',')
                    .map(|l| {
                        let p: Vec<usize> = l.split('/').map(|v| parse_usize(v, "conv layer")).collect::<Result<_>>()?;
                        match p[..] {
                            [channels, kernel, stride] => Ok(ConvLayer { channels, kernel, stride }),
                            _ => Err(Error::Config(format!("bad conv layer `{l}`"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                let mut head = 1;
                for (k, v) in parse_knobs(knobs)? {
                    match k {
                        "head" => head = parse_usize(v, "head")?,
                        _ => return Err(Error::Config(format!("unknown energy knob `{k}`"))),
                    }
                }
                Ok(EnergyArch::Conv { layers, head })
            }
            _ => Err(Error::Config(format!("bad energy arch `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
enum Stage {
    Dense((usize, usize)),
    Conv { w: usize, b: usize, stride: usize, pad: usize },
    Flatten(usize),
}

/// Energy-based model: `E(x) = -f(x) + |x|^2 / (2 s^2)`.
#[derive(Clone, Debug)]
pub struct EnergyModel<T> {
    input: InputSpec,
    arch: EnergyArch,
    reference_scale: f64,
    params: Vec<Param<T>>,
    stages: Vec<Stage>,
    head_units: usize,
}

impl<T: Scalar> EnergyModel<T> {
    pub fn new(input: InputSpec, arch: EnergyArch, reference_scale: f64, seed: u64) -> Result<Self> {
        if !(reference_scale > 0.0) {
            return Err(Error::invalid(format!("reference scale must be positive, got {reference_scale}")));
        }
        let mut pb = ParamBuilder::new(seed);
        let mut stages = Vec::new();
        let head_units;
        match (&arch, input) {
            (EnergyArch::Mlp { hidden }, InputSpec::Points { dim }) => {
                let mut fan_in = dim;
                for (i, &w) in hidden.iter().enumerate() {
                    stages.push(Stage::Dense(pb.dense(&format!("fc{i}"), fan_in, w, false)));
                    fan_in = w;
                }
                stages.push(Stage::Dense(pb.dense("out", fan_in, 1, false)));
                head_units = 1;
            }
            (EnergyArch::Conv { layers, head }, InputSpec::Images { channels, height, width }) => {
                let (mut c, mut h, mut w) = (channels, height, width);
                for (i, l) in layers.iter().enumerate() {
                    let pad = l.kernel / 2;
                    let wi = pb.conv(&format!("conv{i}"), l.channels, c, l.kernel, false);
                    let bi = pb.bias(&format!("conv{i}"), l.channels);
                    stages.push(Stage::Conv { w: wi, b: bi, stride: l.stride, pad });
                    h = conv_out(h, l.kernel, l.stride, pad)
                        .ok_or_else(|| Error::invalid(format!("image {height}x{width} too small for {arch}")))?;
                    w = conv_out(w, l.kernel, l.stride, pad)
                        .ok_or_else(|| Error::invalid(format!("image {height}x{width} too small for {arch}")))?;
                    c = l.channels;
                }
                stages.push(Stage::Flatten(c * h * w));
                stages.push(Stage::Dense(pb.dense("head", c * h * w, *head, false)));
                head_units = *head;
            }
            _ => return Err(Error::invalid(format!("energy arch {arch} does not fit input {input}"))),
        }
        Ok(Self { input, arch, reference_scale, params: pb.finish(), stages, head_units })
    }

    pub fn desk(input: InputSpec, reference_scale: f64, seed: u64) -> Result<Self> {
        Self::new(input, EnergyArch::default_for(&input), reference_scale, seed)
    }

    pub fn input(&self) -> InputSpec {
        self.input
    }

    pub fn arch(&self) -> &EnergyArch {
        &self.arch
    }

    pub fn reference_scale(&self) -> f64 {
        self.reference_scale
    }

    /// Sets every parameter to zero, so `f` is identically zero.
    pub fn zero_out(&mut self) {
        for p in &mut self.params {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Per-example `f(x)` as an `[n, 1]` node.
    pub fn negative_energy(&self, g: &mut Graph<T>, p: &Bound, x: NodeId) -> Result<NodeId> {
        self.input.check("energy", g.shape(x))?;
        let n = g.shape(x)[0];
        let mut h = x;
        let last = self.stages.len() - 1;
        for (i, stage) in self.stages.iter().enumerate() {
            h = match *stage {
                Stage::Dense(wb) => {
                    let out = dense(g, p, wb, h)?;
                    if i == last {
                        out
                    } else {
                        lrelu(g, out)?
                    }
                }
                Stage::Conv { w, b, stride, pad } => {
                    let c = g.conv2d(h, p.get(w), stride, pad)?;
                    let c = g.add_channel_bias(c, p.get(b))?;
                    lrelu(g, c)?
                }
                Stage::Flatten(d) => g.reshape(h, &[n, d])?,
            };
        }
        if self.head_units > 1 {
            let ones = g.constant(Tensor::full(&[self.head_units, 1], T::one()));
            h = g.matmul(h, ones)?;
        }
        Ok(h)
    }

    /// Total energy of a batch, `sum_i E(x_i)`, as a scalar node.
    pub fn energy_node(&self, g: &mut Graph<T>, p: &Bound, x: NodeId) -> Result<NodeId> {
        let f = self.negative_energy(g, p, x)?;
        let f_sum = g.sum(f)?;
        let sq = g.sum_squares(x)?;
        let reference = g.scale(sq, 1.0 / (2.0 * self.reference_scale * self.reference_scale))?;
        g.sub(reference, f_sum)
    }

    /// Total energy of a batch (the energy of a single example when `n = 1`).
    pub fn energy(&self, x: &Tensor<T>) -> Result<T> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xi = g.constant(x.clone());
        let e = self.energy_node(&mut g, &p, xi)?;
        Ok(g.value(e).item())
    }

    /// Energy of each example of a batch.
    pub fn energies(&self, x: &Tensor<T>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xi = g.constant(x.clone());
        let f = self.negative_energy(&mut g, &p, xi)?;
        let inv = 1.0 / (2.0 * self.reference_scale * self.reference_scale);
        let per = x.numel() / x.batch_len();
        Ok(g.value(f)
            .data()
            .iter()
            .zip(x.data().chunks(per))
            .map(|(fv, xs)| {
                let sq: f64 = xs.iter().map(|v| v.as_f64() * v.as_f64()).sum();
                sq * inv - fv.as_f64()
            })
            .collect())
    }

    /// `dE/dx` for every example, plus the total energy before the step.
    pub fn energy_grad_x(&self, x: &Tensor<T>) -> Result<(Tensor<T>, T)> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xi = g.param(x.clone());
        let e = self.energy_node(&mut g, &p, xi)?;
        g.backward(e)?;
        let grad = g.grad(xi).expect("x is tracked").to_vec();
        Ok((Tensor::new(x.shape().to_vec(), grad)?, g.value(e).item()))
    }
}

impl<T: Scalar> Module<T> for EnergyModel<T> {
    fn params(&self) -> &[Param<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }
}
