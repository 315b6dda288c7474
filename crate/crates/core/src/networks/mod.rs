//! The three network families: negative-energy `f`, translator `G` and temporal
//! predictor `R`, at desk scale.

mod energy;
mod predictor;
mod translator;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Scalar, Tensor};

pub use energy::{ConvLayer, EnergyArch, EnergyModel};
pub use predictor::{PredictorArch, TemporalPredictor};
pub use translator::{Direction, Translator, TranslatorArch};

/// Slope of every leaky rectifier in the networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Shape of one example in a domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSpec {
    Points { dim: usize },
    Images { channels: usize, height: usize, width: usize },
}

impl InputSpec {
    pub fn item_shape(&self) -> Vec<usize> {
        match *self {
            InputSpec::Points { dim } => vec![dim],
            InputSpec::Images { channels, height, width } => vec![channels, height, width],
        }
    }

    pub fn numel(&self) -> usize {
        self.item_shape().iter().product()
    }

    pub fn batch_shape(&self, n: usize) -> Vec<usize> {
        let mut s = vec![n];
        s.extend(self.item_shape());
        s
    }

    pub fn from_item_shape(shape: &[usize]) -> Result<Self> {
        match *shape {
            [dim] => Ok(InputSpec::Points { dim }),
            [channels, height, width] => Ok(InputSpec::Images { channels, height, width }),
            _ => Err(Error::invalid(format!("no input spec for example shape {shape:?}"))),
        }
    }

    /// Rejects batches whose per-example shape differs from this spec.
    pub fn check(&self, op: &'static str, batch_shape: &[usize]) -> Result<()> {
        let item = self.item_shape();
        if batch_shape.len() != item.len() + 1 || batch_shape[1..] != item[..] {
            return Err(Error::shape(op, batch_shape, &self.batch_shape(1)));
        }
        Ok(())
    }
}

impl fmt::Display for InputSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSpec::Points { dim } => write!(f, "points:{dim}"),
            InputSpec::Images { channels, height, width } => write!(f, "image:{channels}x{height}x{width}"),
        }
    }
}

impl FromStr for InputSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad input spec `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "points" => Ok(InputSpec::Points { dim: rest.parse().map_err(|_| bad())? }),
            "image" => {
                let d: Vec<usize> = rest.split('x').map(|v| v.parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
                match d[..] {
                    [channels, height, width] => Ok(InputSpec::Images { channels, height, width }),
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }
}

/// Graph handles for a network's parameters, indexed like `params()`.
#[derive(Clone, Debug)]
pub struct Bound {
    ids: Vec<NodeId>,
}

impl Bound {
    /// Wraps nodes already on a graph, in `params()` order.
    pub fn new(ids: Vec<NodeId>) -> Self {
        Self { ids }
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub(crate) fn get(&self, i: usize) -> NodeId {
        self.ids[i]
    }
}

/// Shared behaviour of parameterized networks.
pub trait Module<T: Scalar> {
    fn params(&self) -> &[Param<T>];
    fn params_mut(&mut self) -> &mut [Param<T>];

    /// Inserts the parameters into `g`, as trainable leaves or constants.
    fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let ids = self
            .params()
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.tensor.clone())
                } else {
                    g.constant(p.tensor.clone())
                }
            })
            .collect();
        Bound { ids }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.tensor.numel()).sum()
    }

    fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.tensor.is_finite())
    }

    /// Replaces parameter values; names and shapes must match.
    fn load_params(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        if values.len() != self.params().len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                self.params().len(),
                values.len()
            )));
        }
        for (p, v) in self.params_mut().iter_mut().zip(values) {
            if p.tensor.shape() != v.shape() {
                return Err(Error::shape("load_params", p.tensor.shape(), v.shape()));
            }
            p.tensor = v;
        }
        Ok(())
    }
}

/// Allocates parameters with fan-in scaled Gaussian weights and zero biases.
pub(crate) struct ParamBuilder<T> {
    params: Vec<Param<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ParamBuilder<T> {
    pub fn new(seed: u64) -> Self {
        Self { params: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn push(&mut self, name: String, tensor: Tensor<T>) -> usize {
        self.params.push(Param { name, tensor });
        self.params.len() - 1
    }

    fn gaussian(&mut self, shape: &[usize], fan_in: usize, zero: bool) -> Tensor<T> {
        let std = (2.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                if zero {
                    T::zero()
                } else {
                    T::from_f64_lossy(z * std)
                }
            })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("parameter shape")
    }

    /// Returns (weight, bias) indices for a `[fan_in, fan_out]` dense layer.
    pub fn dense(&mut self, name: &str, fan_in: usize, fan_out: usize, zero: bool) -> (usize, usize) {
        let w = self.gaussian(&[fan_in, fan_out], fan_in, zero);
        let w = self.push(format!("{name}.w"), w);
        let b = self.push(format!("{name}.b"), Tensor::zeros(&[fan_out]));
        (w, b)
    }

    pub fn conv(&mut self, name: &str, out: usize, inp: usize, k: usize, zero: bool) -> usize {
        let w = self.gaussian(&[out, inp, k, k], inp * k * k, zero);
        self.push(format!("{name}.w"), w)
    }

    pub fn conv_transpose(&mut self, name: &str, inp: usize, out: usize, k: usize) -> usize {
        // fan-in of a transposed conv output pixel, averaged over stride phases
        let w = self.gaussian(&[inp, out, k, k], inp * k * k / 4, false);
        self.push(format!("{name}.w"), w)
    }

    pub fn bias(&mut self, name: &str, n: usize) -> usize {
        self.push(format!("{name}.b"), Tensor::zeros(&[n]))
    }

    /// (gamma, beta) of a normalization layer at identity.
    pub fn norm(&mut self, name: &str, c: usize) -> (usize, usize) {
        let g = self.push(format!("{name}.gamma"), Tensor::full(&[c], T::one()));
        let b = self.push(format!("{name}.beta"), Tensor::zeros(&[c]));
        (g, b)
    }

    pub fn finish(self) -> Vec<Param<T>> {
        self.params
    }
}

pub(crate) fn dense<T: Scalar>(g: &mut Graph<T>, p: &Bound, (w, b): (usize, usize), x: NodeId) -> Result<NodeId> {
    let h = g.matmul(x, p.get(w))?;
    g.add_row_bias(h, p.get(b))
}

pub(crate) fn norm<T: Scalar>(g: &mut Graph<T>, p: &Bound, (gamma, beta): (usize, usize), x: NodeId) -> Result<NodeId> {
    g.channel_affine(x, p.get(gamma), p.get(beta))
}

pub(crate) fn lrelu<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> Result<NodeId> {
    g.leaky_relu(x, LEAKY_SLOPE)
}

/// Parses `key=value` knobs after the first `;` of an architecture string.
pub(crate) fn parse_knobs(s: &str) -> Result<Vec<(&str, &str)>> {
    s.split(';')
        .filter(|p| !p.is_empty())
        .map(|p| p.split_once('=').ok_or_else(|| Error::Config(format!("bad architecture knob `{p}`"))))
        .collect()
}

pub(crate) fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Config(format!("bad {what} `{s}`")))
}

pub(crate) fn conv_out(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    (stride > 0 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}
