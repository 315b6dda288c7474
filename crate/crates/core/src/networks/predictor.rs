use std::fmt;
use std::str::FromStr;

use super::{dense, lrelu, parse_usize, Bound, InputSpec, Module, Param, ParamBuilder};
use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Scalar, Tensor};

/// Layout of the temporal predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictorArch {
    /// Two hidden dense layers over the concatenated history.
    Mlp { width: usize },
    /// Two-level U-Net over the channel-concatenated history.
    Conv { width: usize },
}

impl PredictorArch {
    pub fn default_for(input: &InputSpec) -> Self {
        match input {
            InputSpec::Points { .. } => PredictorArch::Mlp { width: 64 },
            InputSpec::Images { .. } => PredictorArch::Conv { width: 8 },
        }
    }
}

impl fmt::Display for PredictorArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorArch::Mlp { width } => write!(f, "mlp:{width}"),
            PredictorArch::Conv { width } => write!(f, "conv:{width}"),
        }
    }
}

impl FromStr for PredictorArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("mlp", w)) => Ok(PredictorArch::Mlp { width: parse_usize(w, "width")? }),
            Some(("conv", w)) => Ok(PredictorArch::Conv { width: parse_usize(w, "width")? }),
            _ => Err(Error::Config(format!("bad predictor arch `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
enum Layout {
    Mlp([(usize, usize); 3]),
    Conv {
        enc1: (usize, usize),
        enc2: (usize, usize),
        dec: (usize, usize),
        out: (usize, usize),
    },
}

/// Temporal predictor `R`: next frame from the `k` previous ones.
///
/// Predicts a correction on top of the most recent frame; the correction starts at zero.
#[derive(Clone, Debug)]
pub struct TemporalPredictor<T> {
    input: InputSpec,
    arch: PredictorArch,
    history: usize,
    params: Vec<Param<T>>,
    layout: Layout,
}

impl<T: Scalar> TemporalPredictor<T> {
    pub fn new(input: InputSpec, arch: PredictorArch, history: usize, seed: u64) -> Result<Self> {
        if history == 0 {
            return Err(Error::invalid("history length k must be positive"));
        }
        let mut pb = ParamBuilder::new(seed);
        let layout = match (arch, input) {
            (PredictorArch::Mlp { width }, InputSpec::Points { dim }) => Layout::Mlp([
                pb.dense("fc0", history * dim, width, false),
                pb.dense("fc1", width, width, false),
                pb.dense("out", width, dim, true),
            ]),
            (PredictorArch::Conv { width }, InputSpec::Images { channels, height, width: w }) => {
                if height % 2 != 0 || w % 2 != 0 {
                    return Err(Error::invalid(format!("predictor needs even image sides, got {height}x{w}")));
                }
                let enc1 = (pb.conv("enc1", width, history * channels, 3, false), pb.bias("enc1", width));
                let enc2 = (pb.conv("enc2", 2 * width, width, 3, false), pb.bias("enc2", 2 * width));
                let dec = (pb.conv_transpose("dec", 2 * width, width, 3), pb.bias("dec", width));
                let out = (pb.conv("out", channels, 2 * width, 3, true), pb.bias("out", channels));
                Layout::Conv { enc1, enc2, dec, out }
            }
            _ => return Err(Error::invalid(format!("predictor arch {arch} does not fit input {input}"))),
        };
        Ok(Self { input, arch, history, params: pb.finish(), layout })
    }

    pub fn desk(input: InputSpec, history: usize, seed: u64) -> Result<Self> {
        Self::new(input, PredictorArch::default_for(&input), history, seed)
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn input(&self) -> InputSpec {
        self.input
    }

    pub fn arch(&self) -> PredictorArch {
        self.arch
    }

    /// `frames` are `k` nodes of shape `[n, ...]`, oldest first.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, frames: &[NodeId]) -> Result<NodeId> {
        if frames.len() != self.history {
            return Err(Error::invalid(format!(
                "predictor expects {} frames, got {}",
                self.history,
                frames.len()
            )));
        }
        for &f in frames {
            self.input.check("predict_next", g.shape(f))?;
        }
        let last = *frames.last().unwrap();
        let stacked = g.concat_channels(frames)?;
        let correction = match &self.layout {
            Layout::Mlp(layers) => {
                let h = dense(g, p, layers[0], stacked)?;
                let h = lrelu(g, h)?;
                let h = dense(g, p, layers[1], h)?;
                let h = lrelu(g, h)?;
                dense(g, p, layers[2], h)?
            }
            Layout::Conv { enc1, enc2, dec, out } => {
                let e1 = g.conv2d(stacked, p.get(enc1.0), 1, 1)?;
                let e1 = g.add_channel_bias(e1, p.get(enc1.1))?;
                let e1 = lrelu(g, e1)?;
                let e2 = g.conv2d(e1, p.get(enc2.0), 2, 1)?;
                let e2 = g.add_channel_bias(e2, p.get(enc2.1))?;
                let e2 = lrelu(g, e2)?;
                let d = g.conv_transpose2d(e2, p.get(dec.0), 2, 1, 1)?;
                let d = g.add_channel_bias(d, p.get(dec.1))?;
                let d = lrelu(g, d)?;
                let skip = g.concat_channels(&[e1, d])?;
                let o = g.conv2d(skip, p.get(out.0), 1, 1)?;
                g.add_channel_bias(o, p.get(out.1))?
            }
        };
        g.add(last, correction)
    }

    /// Predicts the next frame for a batch of histories, without gradients.
    pub fn predict_next(&self, frames: &[Tensor<T>]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let ids: Vec<NodeId> = frames.iter().map(|f| g.constant(f.clone())).collect();
        let out = self.forward(&mut g, &p, &ids)?;
        Ok(g.take(out))
    }
}

impl<T: Scalar> Module<T> for TemporalPredictor<T> {
    fn params(&self) -> &[Param<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_frames_in_one_frame_out() {
        let input = InputSpec::Images { channels: 1, height: 16, width: 16 };
        let mut r = TemporalPredictor::<f32>::desk(input, 2, 3).unwrap();
        for p in r.params_mut() {
            p.tensor.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v += 0.01 * ((i % 5) as f32 - 2.0));
        }
        let frames = vec![Tensor::full(&[1, 1, 16, 16], 0.2f32), Tensor::full(&[1, 1, 16, 16], 0.4f32)];
        let out = r.predict_next(&frames).unwrap();
        assert_eq!(out.shape(), &[1, 1, 16, 16]);
        assert!(out.is_finite());
    }

    #[test]
    fn wrong_history_length_rejected() {
        let input = InputSpec::Images { channels: 1, height: 16, width: 16 };
        let r = TemporalPredictor::<f32>::desk(input, 2, 3).unwrap();
        let frames = vec![Tensor::<f32>::zeros(&[1, 1, 16, 16]); 3];
        assert!(r.predict_next(&frames).is_err());
    }
}
