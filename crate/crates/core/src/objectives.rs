//! Losses and the EBM learning gradient.
//!
//! Each loss comes as a graph builder (`*_node`) for training and a plain
//! evaluation returning `f64`. Sequence clips are tensors shaped
//! `[n, k + 1, ...frame]`.

use crate::error::{Error, Result};
use crate::networks::{Bound, EnergyModel, Module, TemporalPredictor, Translator};
use crate::tensor::{Graph, NodeId, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_cyc: 9.0, lambda1: 9.0, lambda2: 9.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("lambda_cyc", self.lambda_cyc), ("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

fn non_empty<T: Scalar>(what: &str, t: &Tensor<T>) -> Result<()> {
    if t.shape().is_empty() || t.batch_len() == 0 {
        return Err(Error::invalid(format!("{what}: empty batch")));
    }
    Ok(())
}

/// `mean_data f - mean_synth f` as a scalar node.
pub fn ebm_objective_node<T: Scalar>(
    g: &mut Graph<T>,
    model: &EnergyModel<T>,
    p: &Bound,
    data: &Tensor<T>,
    synth: &Tensor<T>,
) -> Result<NodeId> {
    non_empty("ebm_grad data", data)?;
    non_empty("ebm_grad synth", synth)?;
    let d = g.constant(data.clone());
    let s = g.constant(synth.clone());
    let fd = model.negative_energy(g, p, d)?;
    let fs = model.negative_energy(g, p, s)?;
    let md = g.mean(fd)?;
    let ms = g.mean(fs)?;
    g.sub(md, ms)
}

/// Monte Carlo learning gradient: `mean_data df/dtheta - mean_synth df/dtheta`,
/// one buffer per parameter. This is the ascent direction on the log-likelihood.
pub fn ebm_grad<T: Scalar>(model: &EnergyModel<T>, data: &Tensor<T>, synth: &Tensor<T>) -> Result<Vec<Vec<T>>> {
    let mut g = Graph::new();
    let p = model.bind(&mut g, true);
    let obj = ebm_objective_node(&mut g, model, &p, data, synth)?;
    g.backward(obj)?;
    Ok(p.ids().iter().map(|&id| g.grad(id).expect("tracked parameter").to_vec()).collect())
}

fn check_pair(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, a, b));
    }
    Ok(())
}

/// `(1/n) sum_i |target_i - G(source_i)|^2`, with the targets held constant.
pub fn teach_loss_node<T: Scalar>(
    g: &mut Graph<T>,
    gen: &Translator<T>,
    p: &Bound,
    source: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<NodeId> {
    non_empty("teach_loss", source)?;
    check_pair("teach_loss", source.shape(), target.shape())?;
    let s = g.constant(source.clone());
    let t = g.constant(target.clone());
    let out = gen.forward(g, p, s)?;
    let diff = g.sub(t, out)?;
    let sq = g.sum_squares(diff)?;
    g.scale(sq, 1.0 / source.batch_len() as f64)
}

pub fn teach_loss<T: Scalar>(gen: &Translator<T>, source: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    let mut g = Graph::new();
    let p = gen.bind(&mut g, false);
    let l = teach_loss_node(&mut g, gen, &p, source, target)?;
    Ok(g.value(l).item().as_f64())
}

fn round_trip_l1<T: Scalar>(
    g: &mut Graph<T>,
    first: (&Translator<T>, &Bound),
    second: (&Translator<T>, &Bound),
    x: &Tensor<T>,
) -> Result<NodeId> {
    non_empty("cycle_loss", x)?;
    let xi = g.constant(x.clone());
    let a = first.0.forward(g, first.1, xi)?;
    let b = second.0.forward(g, second.1, a)?;
    let d = g.sub(xi, b)?;
    let l1 = g.sum_abs(d)?;
    g.scale(l1, 1.0 / x.batch_len() as f64)
}

/// `(1/n_x) sum |x - G_yx(G_xy(x))|_1 + (1/n_y) sum |y - G_xy(G_yx(y))|_1`.
pub fn cycle_loss_node<T: Scalar>(
    g: &mut Graph<T>,
    xy: (&Translator<T>, &Bound),
    yx: (&Translator<T>, &Bound),
    x: &Tensor<T>,
    y: &Tensor<T>,
) -> Result<NodeId> {
    let lx = round_trip_l1(g, xy, yx, x)?;
    let ly = round_trip_l1(g, yx, xy, y)?;
    g.add(lx, ly)
}

pub fn cycle_loss<T: Scalar>(gxy: &Translator<T>, gyx: &Translator<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    let mut g = Graph::new();
    let pxy = gxy.bind(&mut g, false);
    let pyx = gyx.bind(&mut g, false);
    let l = cycle_loss_node(&mut g, (gxy, &pxy), (gyx, &pyx), x, y)?;
    Ok(g.value(l).item().as_f64())
}

/// Frame `j` of every clip, shaped `[n, ...frame]`.
pub fn clip_frame<T: Scalar>(clips: &Tensor<T>, j: usize) -> Result<Tensor<T>> {
    let shape = clips.shape();
    if shape.len() < 3 || j >= shape[1] {
        return Err(Error::invalid(format!("no frame {j} in clips of shape {shape:?}")));
    }
    let per: usize = shape[2..].iter().product();
    let len = shape[1];
    let mut data = Vec::with_capacity(shape[0] * per);
    for c in 0..shape[0] {
        let at = (c * len + j) * per;
        data.extend_from_slice(&clips.data()[at..at + per]);
    }
    let mut out = vec![shape[0]];
    out.extend_from_slice(&shape[2..]);
    Tensor::new(out, data)
}

/// All frames of all clips as one batch `[n * (k + 1), ...frame]`, clip-major.
pub fn clip_frames_flat<T: Scalar>(clips: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = clips.shape();
    if shape.len() < 3 {
        return Err(Error::invalid(format!("clips must have rank >= 3, got {shape:?}")));
    }
    let mut out = vec![shape[0] * shape[1]];
    out.extend_from_slice(&shape[2..]);
    clips.reshape(&out)
}

fn clip_history<T: Scalar>(g: &mut Graph<T>, clips: &Tensor<T>, k: usize) -> Result<(Vec<NodeId>, NodeId)> {
    non_empty("sequence loss", clips)?;
    if clips.shape().len() < 3 || clips.shape()[1] != k + 1 {
        return Err(Error::invalid(format!(
            "clips must hold k + 1 = {} frames, got shape {:?}",
            k + 1,
            clips.shape()
        )));
    }
    let history = (0..k).map(|j| Ok(g.constant(clip_frame(clips, j)?))).collect::<Result<Vec<_>>>()?;
    let target = g.constant(clip_frame(clips, k)?);
    Ok((history, target))
}

/// Mean over clips of `|x_{t+k} - R(x_{t..t+k-1})|_1`.
pub fn temporal_loss_node<T: Scalar>(
    g: &mut Graph<T>,
    r: &TemporalPredictor<T>,
    p: &Bound,
    clips: &Tensor<T>,
) -> Result<NodeId> {
    let (history, target) = clip_history(g, clips, r.history())?;
    let pred = r.forward(g, p, &history)?;
    let d = g.sub(target, pred)?;
    let l1 = g.sum_abs(d)?;
    g.scale(l1, 1.0 / clips.batch_len() as f64)
}

pub fn temporal_loss<T: Scalar>(r: &TemporalPredictor<T>, clips: &Tensor<T>) -> Result<f64> {
    let mut g = Graph::new();
    let p = r.bind(&mut g, false);
    let l = temporal_loss_node(&mut g, r, &p, clips)?;
    Ok(g.value(l).item().as_f64())
}

/// Mean over clips of `|x_{t+k} - G_back(R_there(G_there(x_{t..t+k-1})))|_1`,
/// with the translators applied frame by frame.
pub fn spatiotemporal_loss_node<T: Scalar>(
    g: &mut Graph<T>,
    there: (&Translator<T>, &Bound),
    r_there: (&TemporalPredictor<T>, &Bound),
    back: (&Translator<T>, &Bound),
    clips: &Tensor<T>,
) -> Result<NodeId> {
    let (history, target) = clip_history(g, clips, r_there.0.history())?;
    let moved = history.iter().map(|&h| there.0.forward(g, there.1, h)).collect::<Result<Vec<_>>>()?;
    let pred = r_there.0.forward(g, r_there.1, &moved)?;
    let home = back.0.forward(g, back.1, pred)?;
    let d = g.sub(target, home)?;
    let l1 = g.sum_abs(d)?;
    g.scale(l1, 1.0 / clips.batch_len() as f64)
}

pub fn spatiotemporal_loss<T: Scalar>(
    there: &Translator<T>,
    r_there: &TemporalPredictor<T>,
    back: &Translator<T>,
    clips: &Tensor<T>,
) -> Result<f64> {
    let mut g = Graph::new();
    let pt = there.bind(&mut g, false);
    let pr = r_there.bind(&mut g, false);
    let pb = back.bind(&mut g, false);
    let l = spatiotemporal_loss_node(&mut g, (there, &pt), (r_there, &pr), (back, &pb), clips)?;
    Ok(g.value(l).item().as_f64())
}

/// The six terms of the sequence objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SequenceLossParts<V> {
    pub teach_x: V,
    pub teach_y: V,
    pub tp_x: V,
    pub tp_y: V,
    pub st_x: V,
    pub st_y: V,
}

impl SequenceLossParts<f64> {
    pub fn combine(&self, w: &LossWeights) -> f64 {
        self.teach_x
            + self.teach_y
            + w.lambda1 * (self.tp_x + self.tp_y)
            + w.lambda2 * (self.st_x + self.st_y)
    }
}

impl SequenceLossParts<NodeId> {
    pub fn combine_node<T: Scalar>(&self, g: &mut Graph<T>, w: &LossWeights) -> Result<NodeId> {
        let teach = g.add(self.teach_x, self.teach_y)?;
        let tp = g.add(self.tp_x, self.tp_y)?;
        let tp = g.scale(tp, w.lambda1)?;
        let st = g.add(self.st_x, self.st_y)?;
        let st = g.scale(st, w.lambda2)?;
        let out = g.add(teach, tp)?;
        g.add(out, st)
    }

    pub fn values<T: Scalar>(&self, g: &Graph<T>) -> SequenceLossParts<f64> {
        let v = |id: NodeId| g.value(id).item().as_f64();
        SequenceLossParts {
            teach_x: v(self.teach_x),
            teach_y: v(self.teach_y),
            tp_x: v(self.tp_x),
            tp_y: v(self.tp_y),
            st_x: v(self.st_x),
            st_y: v(self.st_y),
        }
    }
}

/// Networks and batches entering the sequence objective.
///
/// `gen_x` maps Y to X and `gen_y` maps X to Y. Teaching pairs are
/// `(source, revised target)` frame batches.
pub struct SequenceBatch<'a, T> {
    pub gen_x: &'a Translator<T>,
    pub gen_y: &'a Translator<T>,
    pub pred_x: &'a TemporalPredictor<T>,
    pub pred_y: &'a TemporalPredictor<T>,
    pub clips_x: &'a Tensor<T>,
    pub clips_y: &'a Tensor<T>,
    pub teach_x: (&'a Tensor<T>, &'a Tensor<T>),
    pub teach_y: (&'a Tensor<T>, &'a Tensor<T>),
}

/// Graph handles of the four networks of a [`SequenceBatch`].
pub struct SequenceBound {
    pub gen_x: Bound,
    pub gen_y: Bound,
    pub pred_x: Bound,
    pub pred_y: Bound,
}

pub fn sequence_parts_node<T: Scalar>(
    g: &mut Graph<T>,
    b: &SequenceBatch<'_, T>,
    p: &SequenceBound,
) -> Result<SequenceLossParts<NodeId>> {
    Ok(SequenceLossParts {
        teach_x: teach_loss_node(g, b.gen_x, &p.gen_x, b.teach_x.0, b.teach_x.1)?,
        teach_y: teach_loss_node(g, b.gen_y, &p.gen_y, b.teach_y.0, b.teach_y.1)?,
        tp_x: temporal_loss_node(g, b.pred_x, &p.pred_x, b.clips_x)?,
        tp_y: temporal_loss_node(g, b.pred_y, &p.pred_y, b.clips_y)?,
        st_x: spatiotemporal_loss_node(g, (b.gen_y, &p.gen_y), (b.pred_y, &p.pred_y), (b.gen_x, &p.gen_x), b.clips_x)?,
        st_y: spatiotemporal_loss_node(g, (b.gen_x, &p.gen_x), (b.pred_x, &p.pred_x), (b.gen_y, &p.gen_y), b.clips_y)?,
    })
}

/// Value of the full sequence objective and its parts.
pub fn sequence_objective<T: Scalar>(
    b: &SequenceBatch<'_, T>,
    w: &LossWeights,
) -> Result<(f64, SequenceLossParts<f64>)> {
    let mut g = Graph::new();
    let p = SequenceBound {
        gen_x: b.gen_x.bind(&mut g, false),
        gen_y: b.gen_y.bind(&mut g, false),
        pred_x: b.pred_x.bind(&mut g, false),
        pred_y: b.pred_y.bind(&mut g, false),
    };
    let parts = sequence_parts_node(&mut g, b, &p)?;
    let total = parts.combine_node(&mut g, w)?;
    Ok((g.value(total).item().as_f64(), parts.values(&g)))
}
