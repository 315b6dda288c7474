use super::conv::{conv_out_extent, conv_transpose_out_extent, Window};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The operator catalog.
///
/// Layout conventions: images are `[n, c, h, w]`; convolution kernels are
/// `[out, in, kh, kw]`; transposed-convolution kernels are `[in, out, kh, kw]`.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// Elementwise, identical shapes.
    Add,
    Sub,
    Mul,
    /// Multiply by a constant.
    Scale(f64),
    LeakyRelu { slope: f64 },
    /// `[m, k] @ [k, n]`.
    MatMul,
    /// `[n, c] + [c]`.
    AddRowBias,
    /// `[n, c, ...] + [c]`.
    AddChannelBias,
    /// `[n, c, ...] * gamma[c] + beta[c]`; the normalization layer with statistics frozen at identity.
    ChannelAffine,
    Conv2d { stride: usize, pad: usize },
    ConvTranspose2d { stride: usize, pad: usize, output_pad: usize },
    Reshape(Vec<usize>),
    /// Concatenate `[n, c_i, h, w]` inputs along the channel axis.
    ConcatChannels,
    Sum,
    Mean,
    /// Squared L2 norm of all entries.
    SumSquares,
    /// L1 norm of all entries.
    SumAbs,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::LeakyRelu { .. } => "leaky_relu",
            OpKind::MatMul => "matmul",
            OpKind::AddRowBias => "add_row_bias",
            OpKind::AddChannelBias => "add_channel_bias",
            OpKind::ChannelAffine => "channel_affine",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::ConvTranspose2d { .. } => "conv_transpose2d",
            OpKind::Reshape(_) => "reshape",
            OpKind::ConcatChannels => "concat_channels",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::SumSquares => "sum_squares",
            OpKind::SumAbs => "sum_abs",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            OpKind::Add
            | OpKind::Sub
            | OpKind::Mul
            | OpKind::MatMul
            | OpKind::AddRowBias
            | OpKind::AddChannelBias
            | OpKind::Conv2d { .. }
            | OpKind::ConvTranspose2d { .. } => Some(2),
            OpKind::ChannelAffine => Some(3),
            OpKind::ConcatChannels => None,
            _ => Some(1),
        }
    }
}

struct Node<T> {
    tensor: Tensor<T>,
    op: Option<(OpKind, Vec<NodeId>)>,
    tracked: bool,
}

/// Tape of recorded operations, in topological order by construction.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a leaf. It is differentiated iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> NodeId {
        let tracked = tensor.requires_grad();
        self.push(tensor, None, tracked)
    }

    /// Inserts a leaf that receives gradients.
    pub fn param(&mut self, mut tensor: Tensor<T>) -> NodeId {
        if !tensor.requires_grad() {
            tensor.set_requires_grad(true);
        }
        self.leaf(tensor)
    }

    /// Inserts a leaf that never receives gradients.
    pub fn constant(&mut self, mut tensor: Tensor<T>) -> NodeId {
        tensor.set_requires_grad(false);
        self.leaf(tensor)
    }

    fn push(&mut self, tensor: Tensor<T>, op: Option<(OpKind, Vec<NodeId>)>, tracked: bool) -> NodeId {
        self.nodes.push(Node { tensor, op, tracked });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].tensor
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].tensor.shape()
    }

    /// Accumulated gradient of a leaf, if it requires one.
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.nodes[id.0].tensor.grad()
    }

    /// Moves a node's tensor out, leaving its shape behind with zero data.
    pub fn take(&mut self, id: NodeId) -> Tensor<T> {
        let shape = self.nodes[id.0].tensor.shape().to_vec();
        std::mem::replace(&mut self.nodes[id.0].tensor, Tensor::zeros(&shape))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.tensor.zero_grad();
        }
    }

    pub fn is_tracked(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    /// Evaluates `op` on `inputs` and records the result.
    pub fn apply(&mut self, op: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        if let Some(n) = op.arity() {
            if inputs.len() != n {
                return Err(Error::invalid(format!(
                    "{}: expected {n} inputs, got {}",
                    op.name(),
                    inputs.len()
                )));
            }
        } else if inputs.is_empty() {
            return Err(Error::invalid(format!("{}: needs at least one input", op.name())));
        }
        if let Some(bad) = inputs.iter().find(|i| i.0 >= self.nodes.len()) {
            return Err(Error::invalid(format!("{}: unknown node {}", op.name(), bad.0)));
        }
        let out = {
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|i| &self.nodes[i.0].tensor).collect();
            forward(&op, &vals)?
        };
        let tracked = inputs.iter().any(|i| self.nodes[i.0].tracked);
        Ok(self.push(out, Some((op, inputs.to_vec())), tracked))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.apply(OpKind::Scale(c), &[a])
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> Result<NodeId> {
        self.apply(OpKind::LeakyRelu { slope }, &[a])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn add_row_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::AddRowBias, &[x, b])
    }

    pub fn add_channel_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::AddChannelBias, &[x, b])
    }

    pub fn channel_affine(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        self.apply(OpKind::ChannelAffine, &[x, gamma, beta])
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        self.apply(OpKind::Conv2d { stride, pad }, &[x, w])
    }

    pub fn conv_transpose2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Result<NodeId> {
        self.apply(OpKind::ConvTranspose2d { stride, pad, output_pad }, &[x, w])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.apply(OpKind::Reshape(shape.to_vec()), &[x])
    }

    pub fn concat_channels(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        self.apply(OpKind::ConcatChannels, xs)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Sum, &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Mean, &[x])
    }

    pub fn sum_squares(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::SumSquares, &[x])
    }

    pub fn sum_abs(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::SumAbs, &[x])
    }

    /// Reverse pass from a scalar `root`, accumulating into every tracked leaf.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        let root_t = &self.nodes[root.0].tensor;
        if !root_t.is_scalar() {
            return Err(Error::NotScalar(root_t.shape().to_vec()));
        }
        if !self.nodes[root.0].tracked {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].tracked {
                continue;
            }
            let Some(gout) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                None => {
                    if let Some(acc) = self.nodes[idx].tensor.grad_mut() {
                        for (a, g) in acc.iter_mut().zip(&gout) {
                            *a = *a + *g;
                        }
                    }
                }
                Some((op, inputs)) => {
                    let wants: Vec<bool> = inputs.iter().map(|i| self.nodes[i.0].tracked).collect();
                    let vals: Vec<&Tensor<T>> = inputs.iter().map(|i| &self.nodes[i.0].tensor).collect();
                    let out = &self.nodes[idx].tensor;
                    let contribs = backprop(op, &vals, out, &gout, &wants);
                    for ((input, want), c) in inputs.iter().zip(wants).zip(contribs) {
                        if !want {
                            continue;
                        }
                        let c = c.expect("gradient for tracked input");
                        match &mut grads[input.0] {
                            Some(acc) => {
                                for (a, g) in acc.iter_mut().zip(&c) {
                                    *a = *a + *g;
                                }
                            }
                            slot @ None => *slot = Some(c),
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn same_shape(op: &'static str, a: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn conv_dims(op: &'static str, x: &[usize], w: &[usize], transposed: bool) -> Result<()> {
    let in_axis = if transposed { 0 } else { 1 };
    if x.len() != 4 || w.len() != 4 || x[1] != w[in_axis] {
        return Err(Error::shape(op, x, w));
    }
    Ok(())
}

fn conv_window(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Option<Window> {
    Some(Window {
        channels: x[1],
        height: x[2],
        width: x[3],
        kernel_h: w[2],
        kernel_w: w[3],
        stride,
        pad,
        grid_h: conv_out_extent(x[2], w[2], stride, pad)?,
        grid_w: conv_out_extent(x[3], w[3], stride, pad)?,
    })
}

/// Window over the *output* of a transposed convolution; its grid is the input image.
fn conv_transpose_window(x: &[usize], w: &[usize], stride: usize, pad: usize, output_pad: usize) -> Option<Window> {
    if output_pad >= stride.max(1) && output_pad > 0 {
        return None;
    }
    Some(Window {
        channels: w[1],
        height: conv_transpose_out_extent(x[2], w[2], stride, pad, output_pad)?,
        width: conv_transpose_out_extent(x[3], w[3], stride, pad, output_pad)?,
        kernel_h: w[2],
        kernel_w: w[3],
        stride,
        pad,
        grid_h: x[2],
        grid_w: x[3],
    })
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

fn forward<T: Scalar>(op: &OpKind, x: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let name = op.name();
    let out = match op {
        OpKind::Add => {
            same_shape(name, x[0], x[1])?;
            zip_map(x[0], x[1], |a, b| a + b)
        }
        OpKind::Sub => {
            same_shape(name, x[0], x[1])?;
            zip_map(x[0], x[1], |a, b| a - b)
        }
        OpKind::Mul => {
            same_shape(name, x[0], x[1])?;
            zip_map(x[0], x[1], |a, b| a * b)
        }
        OpKind::Scale(c) => {
            let c = T::from_f64_lossy(*c);
            x[0].map(|v| v * c)
        }
        OpKind::LeakyRelu { slope } => {
            let s = T::from_f64_lossy(*slope);
            x[0].map(|v| if v > T::zero() { v } else { v * s })
        }
        OpKind::MatMul => {
            let (a, b) = (x[0].shape(), x[1].shape());
            if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
                return Err(Error::shape(name, a, b));
            }
            let (m, k, n) = (a[0], a[1], b[1]);
            let mut out = vec![T::zero(); m * n];
            T::gemm(
                m, k, n, T::one(),
                (x[0].data(), k as isize, 1),
                (x[1].data(), n as isize, 1),
                T::zero(),
                (&mut out, n as isize, 1),
            );
            Tensor::new(vec![m, n], out)?
        }
        OpKind::AddRowBias => {
            let (s, b) = (x[0].shape(), x[1].shape());
            if s.len() != 2 || b.len() != 1 || s[1] != b[0] {
                return Err(Error::shape(name, s, b));
            }
            let bias = x[1].data();
            let mut out = x[0].data().to_vec();
            for row in out.chunks_mut(b[0]) {
                for (v, &bb) in row.iter_mut().zip(bias) {
                    *v = *v + bb;
                }
            }
            Tensor::new(s.to_vec(), out)?
        }
        OpKind::AddChannelBias => {
            let (s, b) = (x[0].shape(), x[1].shape());
            if s.len() < 2 || b.len() != 1 || s[1] != b[0] {
                return Err(Error::shape(name, s, b));
            }
            let plane: usize = s[2..].iter().product();
            let bias = x[1].data();
            let mut out = x[0].data().to_vec();
            for (i, chunk) in out.chunks_mut(plane).enumerate() {
                let bb = bias[i % s[1]];
                chunk.iter_mut().for_each(|v| *v = *v + bb);
            }
            Tensor::new(s.to_vec(), out)?
        }
        OpKind::ChannelAffine => {
            let (s, g, b) = (x[0].shape(), x[1].shape(), x[2].shape());
            if s.len() < 2 || g.len() != 1 || s[1] != g[0] {
                return Err(Error::shape(name, s, g));
            }
            if g != b {
                return Err(Error::shape(name, g, b));
            }
            let plane: usize = s[2..].iter().product();
            let (gamma, beta) = (x[1].data(), x[2].data());
            let mut out = x[0].data().to_vec();
            for (i, chunk) in out.chunks_mut(plane).enumerate() {
                let c = i % s[1];
                chunk.iter_mut().for_each(|v| *v = *v * gamma[c] + beta[c]);
            }
            Tensor::new(s.to_vec(), out)?
        }
        OpKind::Conv2d { stride, pad } => {
            let (s, w) = (x[0].shape(), x[1].shape());
            conv_dims(name, s, w, false)?;
            let win = conv_window(s, w, *stride, *pad)
                .filter(|_| *stride > 0)
                .ok_or_else(|| Error::shape(name, s, w))?;
            conv2d_forward(x[0], x[1], &win)
        }
        OpKind::ConvTranspose2d { stride, pad, output_pad } => {
            let (s, w) = (x[0].shape(), x[1].shape());
            conv_dims(name, s, w, true)?;
            let win = conv_transpose_window(s, w, *stride, *pad, *output_pad)
                .filter(|_| *stride > 0)
                .ok_or_else(|| Error::shape(name, s, w))?;
            conv_transpose_forward(x[0], x[1], &win)
        }
        OpKind::Reshape(shape) => x[0].reshape(shape)?,
        OpKind::ConcatChannels => {
            let first = x[0].shape();
            if first.len() < 2 {
                return Err(Error::shape(name, first, first));
            }
            for t in &x[1..] {
                let s = t.shape();
                if s.len() != first.len() || s[0] != first[0] || s[2..] != first[2..] {
                    return Err(Error::shape(name, first, s));
                }
            }
            let n = first[0];
            let plane: usize = first[2..].iter().product();
            let total_c: usize = x.iter().map(|t| t.shape()[1]).sum();
            let mut out = Vec::with_capacity(n * total_c * plane);
            for b in 0..n {
                for t in x {
                    let per = t.shape()[1] * plane;
                    out.extend_from_slice(&t.data()[b * per..(b + 1) * per]);
                }
            }
            let mut shape = first.to_vec();
            shape[1] = total_c;
            Tensor::new(shape, out)?
        }
        OpKind::Sum => Tensor::scalar(x[0].data().iter().copied().sum()),
        OpKind::Mean => {
            let n = T::from_usize(x[0].numel()).unwrap();
            Tensor::scalar(x[0].data().iter().copied().sum::<T>() / n)
        }
        OpKind::SumSquares => Tensor::scalar(x[0].data().iter().map(|&v| v * v).sum()),
        OpKind::SumAbs => Tensor::scalar(x[0].data().iter().map(|v| v.abs()).sum()),
    };
    Ok(out)
}

fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, win: &Window) -> Tensor<T> {
    let n = x.shape()[0];
    let o = w.shape()[0];
    let (rows, cols) = (win.rows(), win.cols());
    let in_per = win.channels * win.height * win.width;
    let mut buf = vec![T::zero(); rows * cols];
    let mut out = vec![T::zero(); n * o * cols];
    for b in 0..n {
        win.im2col(&x.data()[b * in_per..(b + 1) * in_per], &mut buf);
        T::gemm(
            o, rows, cols, T::one(),
            (w.data(), rows as isize, 1),
            (&buf, cols as isize, 1),
            T::zero(),
            (&mut out[b * o * cols..(b + 1) * o * cols], cols as isize, 1),
        );
    }
    Tensor::new(vec![n, o, win.grid_h, win.grid_w], out).expect("conv output shape")
}

fn conv_transpose_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, win: &Window) -> Tensor<T> {
    let n = x.shape()[0];
    let cin = x.shape()[1];
    let (rows, cols) = (win.rows(), win.cols());
    let out_per = win.channels * win.height * win.width;
    let mut buf = vec![T::zero(); rows * cols];
    let mut out = vec![T::zero(); n * out_per];
    for b in 0..n {
        // cols = w^T @ x_b, w viewed as [cin, rows]
        T::gemm(
            rows, cin, cols, T::one(),
            (w.data(), 1, rows as isize),
            (&x.data()[b * cin * cols..(b + 1) * cin * cols], cols as isize, 1),
            T::zero(),
            (&mut buf, cols as isize, 1),
        );
        win.col2im(&buf, &mut out[b * out_per..(b + 1) * out_per]);
    }
    Tensor::new(vec![n, win.channels, win.height, win.width], out).expect("conv_transpose output shape")
}

/// Gradient contributions for each input (None where not wanted).
fn backprop<T: Scalar>(
    op: &OpKind,
    x: &[&Tensor<T>],
    out: &Tensor<T>,
    gout: &[T],
    wants: &[bool],
) -> Vec<Option<Vec<T>>> {
    let want = |i: usize| wants[i];
    match op {
        OpKind::Add => vec![want(0).then(|| gout.to_vec()), want(1).then(|| gout.to_vec())],
        OpKind::Sub => vec![
            want(0).then(|| gout.to_vec()),
            want(1).then(|| gout.iter().map(|&g| -g).collect()),
        ],
        OpKind::Mul => vec![
            want(0).then(|| gout.iter().zip(x[1].data()).map(|(&g, &b)| g * b).collect()),
            want(1).then(|| gout.iter().zip(x[0].data()).map(|(&g, &a)| g * a).collect()),
        ],
        OpKind::Scale(c) => {
            let c = T::from_f64_lossy(*c);
            vec![Some(gout.iter().map(|&g| g * c).collect())]
        }
        OpKind::LeakyRelu { slope } => {
            let s = T::from_f64_lossy(*slope);
            vec![Some(
                gout.iter()
                    .zip(x[0].data())
                    .map(|(&g, &v)| if v > T::zero() { g } else { g * s })
                    .collect(),
            )]
        }
        OpKind::MatMul => {
            let (m, k, n) = (x[0].shape()[0], x[0].shape()[1], x[1].shape()[1]);
            let ga = want(0).then(|| {
                let mut ga = vec![T::zero(); m * k];
                T::gemm(
                    m, n, k, T::one(),
                    (gout, n as isize, 1),
                    (x[1].data(), 1, n as isize),
                    T::zero(),
                    (&mut ga, k as isize, 1),
                );
                ga
            });
            let gb = want(1).then(|| {
                let mut gb = vec![T::zero(); k * n];
                T::gemm(
                    k, m, n, T::one(),
                    (x[0].data(), 1, k as isize),
                    (gout, n as isize, 1),
                    T::zero(),
                    (&mut gb, n as isize, 1),
                );
                gb
            });
            vec![ga, gb]
        }
        OpKind::AddRowBias => {
            let c = x[1].numel();
            let gb = want(1).then(|| {
                let mut gb = vec![T::zero(); c];
                for row in gout.chunks(c) {
                    for (a, &g) in gb.iter_mut().zip(row) {
                        *a = *a + g;
                    }
                }
                gb
            });
            vec![want(0).then(|| gout.to_vec()), gb]
        }
        OpKind::AddChannelBias => {
            let s = x[0].shape();
            let plane: usize = s[2..].iter().product();
            let gb = want(1).then(|| {
                let mut gb = vec![T::zero(); s[1]];
                for (i, chunk) in gout.chunks(plane).enumerate() {
                    gb[i % s[1]] = gb[i % s[1]] + chunk.iter().copied().sum();
                }
                gb
            });
            vec![want(0).then(|| gout.to_vec()), gb]
        }
        OpKind::ChannelAffine => {
            let s = x[0].shape();
            let c = s[1];
            let plane: usize = s[2..].iter().product();
            let gamma = x[1].data();
            let gx = want(0).then(|| {
                let mut gx = gout.to_vec();
                for (i, chunk) in gx.chunks_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = *v * gamma[i % c]);
                }
                gx
            });
            let ggamma = want(1).then(|| {
                let mut gg = vec![T::zero(); c];
                for (i, (gc, xc)) in gout.chunks(plane).zip(x[0].data().chunks(plane)).enumerate() {
                    gg[i % c] = gg[i % c] + gc.iter().zip(xc).map(|(&g, &v)| g * v).sum();
                }
                gg
            });
            let gbeta = want(2).then(|| {
                let mut gb = vec![T::zero(); c];
                for (i, chunk) in gout.chunks(plane).enumerate() {
                    gb[i % c] = gb[i % c] + chunk.iter().copied().sum();
                }
                gb
            });
            vec![gx, ggamma, gbeta]
        }
        OpKind::Conv2d { stride, pad } => {
            let win = conv_window(x[0].shape(), x[1].shape(), *stride, *pad).expect("validated in forward");
            let (gx, gw) = conv2d_backward(x[0], x[1], gout, &win, want(0), want(1));
            vec![gx, gw]
        }
        OpKind::ConvTranspose2d { stride, pad, output_pad } => {
            let win = conv_transpose_window(x[0].shape(), x[1].shape(), *stride, *pad, *output_pad)
                .expect("validated in forward");
            let (gx, gw) = conv_transpose_backward(x[0], x[1], gout, &win, want(0), want(1));
            vec![gx, gw]
        }
        OpKind::Reshape(_) => vec![Some(gout.to_vec())],
        OpKind::ConcatChannels => {
            let first = x[0].shape();
            let n = first[0];
            let plane: usize = first[2..].iter().product();
            let total_c = out.shape()[1];
            let mut offset = 0;
            let mut res = Vec::with_capacity(x.len());
            for (i, t) in x.iter().enumerate() {
                let per = t.shape()[1] * plane;
                res.push(want(i).then(|| {
                    let mut g = Vec::with_capacity(n * per);
                    for b in 0..n {
                        let start = b * total_c * plane + offset;
                        g.extend_from_slice(&gout[start..start + per]);
                    }
                    g
                }));
                offset += per;
            }
            res
        }
        OpKind::Sum => vec![Some(vec![gout[0]; x[0].numel()])],
        OpKind::Mean => {
            let n = T::from_usize(x[0].numel()).unwrap();
            vec![Some(vec![gout[0] / n; x[0].numel()])]
        }
        OpKind::SumSquares => {
            let two = T::from_f64_lossy(2.0);
            vec![Some(x[0].data().iter().map(|&v| two * v * gout[0]).collect())]
        }
        OpKind::SumAbs => vec![Some(
            x[0].data()
                .iter()
                .map(|&v| {
                    if v > T::zero() {
                        gout[0]
                    } else if v < T::zero() {
                        -gout[0]
                    } else {
                        T::zero()
                    }
                })
                .collect(),
        )],
    }
}

fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &[T],
    win: &Window,
    want_x: bool,
    want_w: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let n = x.shape()[0];
    let o = w.shape()[0];
    let (rows, cols) = (win.rows(), win.cols());
    let in_per = win.channels * win.height * win.width;
    let mut buf = vec![T::zero(); rows * cols];
    let mut gx = want_x.then(|| vec![T::zero(); x.numel()]);
    let mut gw = want_w.then(|| vec![T::zero(); w.numel()]);
    for b in 0..n {
        let gb = &gout[b * o * cols..(b + 1) * o * cols];
        if let Some(gw) = gw.as_mut() {
            win.im2col(&x.data()[b * in_per..(b + 1) * in_per], &mut buf);
            T::gemm(
                o, cols, rows, T::one(),
                (gb, cols as isize, 1),
                (&buf, 1, cols as isize),
                T::one(),
                (gw, rows as isize, 1),
            );
        }
        if let Some(gx) = gx.as_mut() {
            T::gemm(
                rows, o, cols, T::one(),
                (w.data(), 1, rows as isize),
                (gb, cols as isize, 1),
                T::zero(),
                (&mut buf, cols as isize, 1),
            );
            win.col2im(&buf, &mut gx[b * in_per..(b + 1) * in_per]);
        }
    }
    (gx, gw)
}

fn conv_transpose_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &[T],
    win: &Window,
    want_x: bool,
    want_w: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let n = x.shape()[0];
    let cin = x.shape()[1];
    let (rows, cols) = (win.rows(), win.cols());
    let out_per = win.channels * win.height * win.width;
    let mut buf = vec![T::zero(); rows * cols];
    let mut gx = want_x.then(|| vec![T::zero(); x.numel()]);
    let mut gw = want_w.then(|| vec![T::zero(); w.numel()]);
    for b in 0..n {
        win.im2col(&gout[b * out_per..(b + 1) * out_per], &mut buf);
        if let Some(gx) = gx.as_mut() {
            T::gemm(
                cin, rows, cols, T::one(),
                (w.data(), rows as isize, 1),
                (&buf, cols as isize, 1),
                T::zero(),
                (&mut gx[b * cin * cols..(b + 1) * cin * cols], cols as isize, 1),
            );
        }
        if let Some(gw) = gw.as_mut() {
            T::gemm(
                cin, cols, rows, T::one(),
                (&x.data()[b * cin * cols..(b + 1) * cin * cols], cols as isize, 1),
                (&buf, 1, cols as isize),
                T::one(),
                (gw, rows as isize, 1),
            );
        }
    }
    (gx, gw)
}
