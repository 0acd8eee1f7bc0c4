//! Tape-based reverse-mode differentiation over whole-tensor layer ops.
//!
//! A [`Graph`] borrows a [`ParameterStore`] read-only, records every op applied
//! during a forward pass, and [`Graph::backward`] walks the tape in reverse.
//! Parameters from frozen partitions enter the tape as constants, so no
//! gradient flows into (or through) them unless something upstream needs it.
//!
//! Batch-norm layers in train mode do not touch the store; they queue
//! [`RunningStatUpdate`]s that the caller applies once the step is done.

use crate::error::{Error, Result};
use crate::nn::kernels::{self, ConvPlan, Dims3};
use crate::nn::params::{Gradients, ParamId, ParameterStore};
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output extent equals input extent; needs stride 1 and an odd dilated kernel span.
    Same,
    Explicit(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: Vec<usize>,
    pub dilation: Vec<usize>,
    pub padding: Padding,
}

impl ConvGeometry {
    /// Stride 1, no dilation, "same" padding, for `rank` spatial axes.
    pub fn same(rank: usize) -> Self {
        ConvGeometry { stride: vec![1; rank], dilation: vec![1; rank], padding: Padding::Same }
    }

    pub fn dilated_same(dilation: usize) -> Self {
        ConvGeometry { stride: vec![1], dilation: vec![dilation], padding: Padding::Same }
    }

    pub fn explicit(stride: &[usize], padding: &[usize]) -> Self {
        ConvGeometry {
            stride: stride.to_vec(),
            dilation: vec![1; stride.len()],
            padding: Padding::Explicit(padding.to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Vec<usize>,
}

/// Running-statistics refresh produced by a train-mode batch-norm layer.
#[derive(Clone, Debug)]
pub struct RunningStatUpdate {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub batch_mean: Vec<f32>,
    /// Unbiased (n - 1) batch variance.
    pub batch_var: Vec<f32>,
    pub momentum: f32,
}

impl RunningStatUpdate {
    pub fn apply(&self, store: &mut ParameterStore) {
        let m = self.momentum;
        for (r, &b) in store.get_mut(self.running_mean).data_mut().iter_mut().zip(&self.batch_mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, &b) in store.get_mut(self.running_var).data_mut().iter_mut().zip(&self.batch_var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BatchNormSpec {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f32,
    pub eps: f32,
    pub train: bool,
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var>, plan: ConvPlan },
    BatchNorm { x: Var, gamma: Var, beta: Var, mean: Vec<f32>, inv_std: Vec<f32>, train: bool },
    PRelu { x: Var, slope: Var },
    Relu { x: Var },
    MaxPool { x: Var, argmax: Vec<u32>, in_len: usize, out_len: usize },
    SpatialMean { x: Var },
    MeanAxis { x: Var, axis: usize },
    Dropout { x: Var, mask: Vec<f32> },
    Linear { x: Var, w: Var, b: Var },
    Add { a: Var, b: Var },
    Concat { xs: Vec<Var>, widths: Vec<usize> },
    Permute { x: Var, axes: Vec<usize> },
    Reshape { x: Var },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f32> },
    Bce { logits: Var, labels: Vec<f32> },
    WeightedSum { x: Var, weights: Tensor },
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
    mode: Mode,
    rng: Rng,
    stat_updates: Vec<RunningStatUpdate>,
}

/// Splits a `[N, C, rest...]` shape into `(N, C, product(rest))`.
fn ncs(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::InvalidShape { shape: shape.to_vec(), reason: "expected [N, C, ...]".into() });
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

fn canon3(v: &[usize], fill: usize) -> Dims3 {
    let mut out = [fill; 3];
    out[3 - v.len()..].copy_from_slice(v);
    out
}

fn add_into(acc: &mut Option<Tensor>, g: Tensor) {
    match acc {
        Some(a) => a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y),
        None => *acc = Some(g),
    }
}

impl<'s> Graph<'s> {
    /// `seed` drives dropout masks in train mode.
    pub fn new(store: &'s ParameterStore, mode: Mode, seed: u64) -> Self {
        Graph { store, nodes: Vec::new(), mode, rng: Rng::new(seed), stat_updates: Vec::new() }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_training(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Running-stat refreshes queued by train-mode batch norms.
    pub fn take_stat_updates(&mut self) -> Vec<RunningStatUpdate> {
        std::mem::take(&mut self.stat_updates)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: Value::Owned(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.requires_grad(v))
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`] (see [`Gradients::input`]).
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let requires_grad = self.store.requires_grad(id);
        self.nodes.push(Node { value: Value::Param(id), op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, geom: &ConvGeometry) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let rank = ws.len().saturating_sub(2);
        if !(1..=3).contains(&rank) || xs.len() != rank + 2 {
            return Err(Error::InvalidArgument(format!(
                "conv input {xs:?} and weight {ws:?} must share 1-3 spatial axes"
            )));
        }
        if xs[1] != ws[1] {
            return Err(Error::InvalidArgument(format!(
                "inconsistent channels: input has {} but weight expects {}",
                xs[1], ws[1]
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(Error::shape(self.shape(b), &[ws[0]]));
            }
        }
        if geom.stride.len() != rank || geom.dilation.len() != rank {
            return Err(Error::InvalidArgument(format!("conv geometry {geom:?} does not match rank {rank}")));
        }
        let kernel = &ws[2..];
        let pad: Vec<usize> = match &geom.padding {
            Padding::Explicit(p) if p.len() == rank => p.clone(),
            Padding::Explicit(p) => {
                return Err(Error::InvalidArgument(format!("padding {p:?} does not match rank {rank}")));
            }
            Padding::Same => {
                let mut p = Vec::with_capacity(rank);
                for i in 0..rank {
                    let span = geom.dilation[i] * (kernel[i] - 1);
                    if geom.stride[i] != 1 || !span.is_multiple_of(2) {
                        return Err(Error::InvalidArgument(format!(
                            "same padding needs stride 1 and an odd dilated kernel, got kernel {kernel:?} {geom:?}"
                        )));
                    }
                    p.push(span / 2);
                }
                p
            }
        };
        let plan = ConvPlan::new(
            ws[1],
            ws[0],
            canon3(&xs[2..], 1),
            canon3(kernel, 1),
            canon3(&geom.stride, 1),
            canon3(&geom.dilation, 1),
            canon3(&pad, 0),
        )?;
        let bias = b.map(|b| self.value(b).data());
        let out = kernels::conv_forward(&plan, xs[0], self.value(x).data(), self.value(w).data(), bias);
        let mut shape = vec![xs[0], ws[0]];
        shape.extend_from_slice(&plan.output[3 - rank..]);
        let rg = self.any_grad(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(Tensor::from_parts(shape, out), Op::Conv { x, w, b, plan }, rg))
    }

    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, spec: BatchNormSpec) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (n, c, s) = ncs(&xs)?;
        for v in [gamma, beta] {
            if self.shape(v) != [c] {
                return Err(Error::shape(self.shape(v), &[c]));
            }
        }
        let (mean, inv_std) = if spec.train {
            let count = n * s;
            if count < 2 {
                return Err(Error::InvalidArgument(
                    "batch norm in train mode needs more than one value per channel".into(),
                ));
            }
            let (mean, var) = kernels::channel_moments(n, c, s, self.value(x).data());
            let unbiased = count as f64 / (count - 1) as f64;
            self.stat_updates.push(RunningStatUpdate {
                running_mean: spec.running_mean,
                running_var: spec.running_var,
                batch_mean: mean.iter().map(|&m| m as f32).collect(),
                batch_var: var.iter().map(|&v| (v * unbiased) as f32).collect(),
                momentum: spec.momentum,
            });
            let inv: Vec<f32> = var.iter().map(|&v| (1.0 / (v + spec.eps as f64).sqrt()) as f32).collect();
            (mean.iter().map(|&m| m as f32).collect::<Vec<_>>(), inv)
        } else {
            let rm = self.store.get(spec.running_mean).data().to_vec();
            let rv = self.store.get(spec.running_var).data();
            (rm, rv.iter().map(|&v| 1.0 / (v + spec.eps).sqrt()).collect())
        };
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let scale: Vec<f32> = (0..c).map(|ch| g[ch] * inv_std[ch]).collect();
        let shift: Vec<f32> = (0..c).map(|ch| bt[ch] - mean[ch] * scale[ch]).collect();
        let y = kernels::channel_affine(n, c, s, self.value(x).data(), &scale, &shift);
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::from_parts(xs, y),
            Op::BatchNorm { x, gamma, beta, mean, inv_std, train: spec.train },
            rg,
        ))
    }

    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (_, c, s) = ncs(&xs)?;
        if self.shape(slope) != [c] {
            return Err(Error::InvalidArgument(format!(
                "prelu slope length {:?} does not match channel count {c}",
                self.shape(slope)
            )));
        }
        let a = self.value(slope).data();
        let data: Vec<f32> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| if v > 0.0 { v } else { a[(i / s) % c] * v })
            .collect();
        let rg = self.any_grad(&[x, slope]);
        Ok(self.push(Tensor::from_parts(xs, data), Op::PRelu { x, slope }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).relu();
        let rg = self.requires_grad(x);
        self.push(y, Op::Relu { x }, rg)
    }

    pub fn max_pool(&mut self, x: Var, geom: &PoolGeometry) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let rank = xs.len().saturating_sub(2);
        if !(1..=3).contains(&rank) || geom.kernel.len() != rank || geom.stride.len() != rank || geom.padding.len() != rank
        {
            return Err(Error::InvalidArgument(format!("pool geometry {geom:?} does not fit input {xs:?}")));
        }
        if geom.padding.iter().zip(&geom.kernel).any(|(&p, &k)| 2 * p > k) {
            return Err(Error::InvalidArgument(format!("pool padding must be less than half the kernel: {geom:?}")));
        }
        let planes = xs[0] * xs[1];
        let input = canon3(&xs[2..], 1);
        let (output, vals, argmax) = kernels::max_pool_forward(
            planes,
            input,
            canon3(&geom.kernel, 1),
            canon3(&geom.stride, 1),
            canon3(&geom.padding, 0),
            self.value(x).data(),
        )?;
        let mut shape = xs[..2].to_vec();
        shape.extend_from_slice(&output[3 - rank..]);
        let in_len = input.iter().product();
        let out_len = output.iter().product();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::from_parts(shape, vals), Op::MaxPool { x, argmax, in_len, out_len }, rg))
    }

    /// Mean over every axis after the channel axis: `[N, C, ...] -> [N, C]`.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (n, c, s) = ncs(&xs)?;
        let data: Vec<f32> = self
            .value(x)
            .data()
            .chunks(s)
            .map(|p| (p.iter().map(|&v| v as f64).sum::<f64>() / s as f64) as f32)
            .collect();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::from_parts(vec![n, c], data), Op::SpatialMean { x }, rg))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let y = crate::tensor::reduce(crate::tensor::ReduceOp::Mean, self.value(x), axis)?;
        let rg = self.requires_grad(x);
        Ok(self.push(y, Op::MeanAxis { x, axis }, rg))
    }

    /// Inverted dropout: identity in eval mode, scaled Bernoulli mask in train mode.
    pub fn dropout(&mut self, x: Var, p: f32) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability {p} outside [0, 1)")));
        }
        if self.mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let numel = self.value(x).numel();
        let mask: Vec<f32> = (0..numel).map(|_| if self.rng.bernoulli(p) { 0.0 } else { keep }).collect();
        let xs = self.shape(x).to_vec();
        let data = self.value(x).data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::from_parts(xs, data), Op::Dropout { x, mask }, rg))
    }

    /// `[N, in] x [out, in]^T + [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::InvalidArgument(format!(
                "linear width mismatch: input {xs:?}, weight {ws:?}"
            )));
        }
        if self.shape(b) != [ws[0]] {
            return Err(Error::shape(self.shape(b), &[ws[0]]));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let mut y = vec![0.0f32; n * dout];
        for row in y.chunks_mut(dout) {
            row.copy_from_slice(self.value(b).data());
        }
        kernels::sgemm(n, din, dout, self.value(x).data(), false, self.value(w).data(), true, &mut y, 1.0);
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(Tensor::from_parts(vec![n, dout], y), Op::Linear { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).add(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(y, Op::Add { a, b }, rg))
    }

    /// Concatenates `[N, C_i, rest...]` inputs along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.shape(*xs.first().ok_or_else(|| Error::InvalidArgument("empty concat".into()))?).to_vec();
        let (n, _, s) = ncs(&first)?;
        let mut widths = Vec::with_capacity(xs.len());
        for &v in xs {
            let sh = self.shape(v);
            if sh.len() != first.len() || sh[0] != n || sh[2..] != first[2..] {
                return Err(Error::shape(&first, sh));
            }
            widths.push(sh[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total * s);
        for i in 0..n {
            for (&v, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(v).data()[i * w * s..(i + 1) * w * s]);
            }
        }
        let mut shape = first.clone();
        shape[1] = total;
        let rg = self.any_grad(xs);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Concat { xs: xs.to_vec(), widths }, rg))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let y = self.value(x).permute(axes)?;
        let rg = self.requires_grad(x);
        Ok(self.push(y, Op::Permute { x, axes: axes.to_vec() }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.requires_grad(x);
        Ok(self.push(y, Op::Reshape { x }, rg))
    }

    /// Batch-mean softmax cross entropy of `[B, L]` logits.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || ls[0] != labels.len() {
            return Err(Error::InvalidArgument(format!("logits {ls:?} vs {} labels", labels.len())));
        }
        let l = ls[1];
        let mut total = 0.0f64;
        let mut probs = Vec::with_capacity(ls[0] * l);
        for (row, &y) in self.value(logits).data().chunks(l).zip(labels) {
            total += crate::train::ce_loss_slice(row, y)?;
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
            let z: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
            probs.extend(row.iter().map(|&v| ((v as f64 - max).exp() / z) as f32));
        }
        let loss = (total / labels.len() as f64) as f32;
        let rg = self.requires_grad(logits);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, labels: labels.to_vec(), probs }, rg))
    }

    /// Batch-mean binary cross entropy on logits (one per sample).
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f32]) -> Result<Var> {
        let z = self.value(logits).data();
        if z.len() != labels.len() {
            return Err(Error::InvalidArgument(format!("{} logits vs {} labels", z.len(), labels.len())));
        }
        let mut total = 0.0f64;
        for (&zi, &yi) in z.iter().zip(labels) {
            total += crate::train::bce_loss_f64(zi, yi)?;
        }
        let loss = (total / labels.len() as f64) as f32;
        let rg = self.requires_grad(logits);
        Ok(self.push(Tensor::scalar(loss), Op::Bce { logits, labels: labels.to_vec() }, rg))
    }

    /// `sum(x * weights)` as a scalar; a generic probe loss for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        if weights.shape() != self.shape(x) {
            return Err(Error::shape(self.shape(x), weights.shape()));
        }
        let s: f64 = self.value(x).data().iter().zip(weights.data()).map(|(&a, &b)| a as f64 * b as f64).sum();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::scalar(s as f32), Op::WeightedSum { x, weights }, rg))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Gradient("backward called without a recorded forward pass".into()));
        }
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Gradient(format!("loss must be scalar, got shape {:?}", lv.shape())));
        }
        if !lv.data()[0].is_finite() {
            return Err(Error::Gradient(format!("non-finite loss {}", lv.data()[0])));
        }
        if !self.requires_grad(loss) {
            return Err(Error::Gradient("loss does not depend on any trainable tensor".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            let send = |v: Var, g: Tensor, grads: &mut Vec<Option<Tensor>>| {
                if self.requires_grad(v) {
                    add_into(&mut grads[v.0], g);
                }
            };
            match &node.op {
                Op::Leaf => match node.value {
                    Value::Param(id) => {
                        let mut slot = out.params.remove(&id);
                        add_into(&mut slot, dy);
                        out.params.insert(id, slot.unwrap());
                    }
                    Value::Owned(_) => {
                        let mut slot = out.inputs.remove(&i);
                        add_into(&mut slot, dy);
                        out.inputs.insert(i, slot.unwrap());
                    }
                },
                Op::Conv { x, w, b, plan } => {
                    let n = self.shape(*x)[0];
                    let want_b = b.is_some_and(|b| self.requires_grad(b));
                    if self.requires_grad(*w) || want_b {
                        let (dw, db) =
                            kernels::conv_backward_params(plan, n, self.value(*x).data(), dy.data(), want_b);
                        send(*w, Tensor::from_parts(self.shape(*w).to_vec(), dw), &mut grads);
                        if let (Some(b), Some(db)) = (b, db) {
                            send(*b, Tensor::from_parts(vec![plan.c_out], db), &mut grads);
                        }
                    }
                    if self.requires_grad(*x) {
                        let dx = kernels::conv_backward_input(plan, n, self.value(*w).data(), dy.data());
                        send(*x, Tensor::from_parts(self.shape(*x).to_vec(), dx), &mut grads);
                    }
                }
                Op::BatchNorm { x, gamma, beta, mean, inv_std, train } => {
                    let xs = self.shape(*x);
                    let (n, c, s) = ncs(xs)?;
                    let xv = self.value(*x).data();
                    let shift: Vec<f32> = (0..c).map(|ch| -mean[ch] * inv_std[ch]).collect();
                    let x_hat = kernels::channel_affine(n, c, s, xv, inv_std, &shift);
                    let (sum_dy, sum_dy_xhat) = kernels::channel_sums(n, c, s, dy.data(), &x_hat);
                    send(*gamma, Tensor::from_parts(vec![c], sum_dy_xhat.iter().map(|&v| v as f32).collect()), &mut grads);
                    send(*beta, Tensor::from_parts(vec![c], sum_dy.iter().map(|&v| v as f32).collect()), &mut grads);
                    if self.requires_grad(*x) {
                        let g = self.value(*gamma).data();
                        let dx: Vec<f32> = if *train {
                            let m = (n * s) as f64;
                            let mut dx = vec![0.0f32; n * c * s];
                            for i in 0..n {
                                for ch in 0..c {
                                    let k = g[ch] as f64 * inv_std[ch] as f64;
                                    let mdy = sum_dy[ch] / m;
                                    let mdx = sum_dy_xhat[ch] / m;
                                    let r = (i * c + ch) * s..(i * c + ch + 1) * s;
                                    for j in r {
                                        dx[j] = (k * (dy.data()[j] as f64 - mdy - x_hat[j] as f64 * mdx)) as f32;
                                    }
                                }
                            }
                            dx
                        } else {
                            let k: Vec<f32> = (0..c).map(|ch| g[ch] * inv_std[ch]).collect();
                            kernels::channel_affine(n, c, s, dy.data(), &k, &vec![0.0; c])
                        };
                        send(*x, Tensor::from_parts(xs.to_vec(), dx), &mut grads);
                    }
                }
                Op::PRelu { x, slope } => {
                    let xs = self.shape(*x);
                    let (_, c, s) = ncs(xs)?;
                    let xv = self.value(*x).data();
                    let a = self.value(*slope).data();
                    if self.requires_grad(*slope) {
                        let mut da = vec![0.0f64; c];
                        for (j, (&v, &g)) in xv.iter().zip(dy.data()).enumerate() {
                            if v <= 0.0 {
                                da[(j / s) % c] += v as f64 * g as f64;
                            }
                        }
                        send(*slope, Tensor::from_parts(vec![c], da.into_iter().map(|v| v as f32).collect()), &mut grads);
                    }
                    if self.requires_grad(*x) {
                        let dx = xv
                            .iter()
                            .zip(dy.data())
                            .enumerate()
                            .map(|(j, (&v, &g))| if v > 0.0 { g } else { a[(j / s) % c] * g })
                            .collect();
                        send(*x, Tensor::from_parts(xs.to_vec(), dx), &mut grads);
                    }
                }
                Op::Relu { x } => {
                    let xv = self.value(*x);
                    let dx = xv.data().iter().zip(dy.data()).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
                    send(*x, Tensor::from_parts(xv.shape().to_vec(), dx), &mut grads);
                }
                Op::MaxPool { x, argmax, in_len, out_len } => {
                    let xs = self.shape(*x);
                    let dx = kernels::max_pool_backward(xs[0] * xs[1], *in_len, *out_len, argmax, dy.data());
                    send(*x, Tensor::from_parts(xs.to_vec(), dx), &mut grads);
                }
                Op::SpatialMean { x } => {
                    let xs = self.shape(*x);
                    let (_, _, s) = ncs(xs)?;
                    let inv = 1.0 / s as f32;
                    let dx = dy.data().iter().flat_map(|&g| std::iter::repeat_n(g * inv, s)).collect();
                    send(*x, Tensor::from_parts(xs.to_vec(), dx), &mut grads);
                }
                Op::MeanAxis { x, axis } => {
                    let xs = self.shape(*x);
                    let outer: usize = xs[..*axis].iter().product();
                    let len = xs[*axis];
                    let inner: usize = xs[axis + 1..].iter().product();
                    let inv = 1.0 / len as f32;
                    let mut dx = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        for _ in 0..len {
                            dx.extend(dy.data()[o * inner..(o + 1) * inner].iter().map(|&g| g * inv));
                        }
                    }
                    send(*x, Tensor::from_parts(xs.to_vec(), dx), &mut grads);
                }
                Op::Dropout { x, mask } => {
                    let dx = dy.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                    send(*x, Tensor::from_parts(dy.shape().to_vec(), dx), &mut grads);
                }
                Op::Linear { x, w, b } => {
                    let xs = self.shape(*x);
                    let (n, din) = (xs[0], xs[1]);
                    let dout = self.shape(*w)[0];
                    if self.requires_grad(*w) {
                        let mut dw = vec![0.0f32; dout * din];
                        kernels::sgemm(dout, n, din, dy.data(), true, self.value(*x).data(), false, &mut dw, 0.0);
                        send(*w, Tensor::from_parts(vec![dout, din], dw), &mut grads);
                    }
                    if self.requires_grad(*b) {
                        let mut db = vec![0.0f64; dout];
                        for row in dy.data().chunks(dout) {
                            db.iter_mut().zip(row).for_each(|(a, &g)| *a += g as f64);
                        }
                        send(*b, Tensor::from_parts(vec![dout], db.into_iter().map(|v| v as f32).collect()), &mut grads);
                    }
                    if self.requires_grad(*x) {
                        let mut dx = vec![0.0f32; n * din];
                        kernels::sgemm(n, dout, din, dy.data(), false, self.value(*w).data(), false, &mut dx, 0.0);
                        send(*x, Tensor::from_parts(vec![n, din], dx), &mut grads);
                    }
                }
                Op::Add { a, b } => {
                    send(*a, dy.clone(), &mut grads);
                    send(*b, dy, &mut grads);
                }
                Op::Concat { xs, widths } => {
                    let shape = dy.shape().to_vec();
                    let (n, total, s) = ncs(&shape)?;
                    let mut offset = 0;
                    for (&v, &w) in xs.iter().zip(widths) {
                        if self.requires_grad(v) {
                            let mut g = Vec::with_capacity(n * w * s);
                            for i in 0..n {
                                let start = (i * total + offset) * s;
                                g.extend_from_slice(&dy.data()[start..start + w * s]);
                            }
                            send(v, Tensor::from_parts(self.shape(v).to_vec(), g), &mut grads);
                        }
                        offset += w;
                    }
                }
                Op::Permute { x, axes } => {
                    let mut inverse = vec![0; axes.len()];
                    for (i, &a) in axes.iter().enumerate() {
                        inverse[a] = i;
                    }
                    send(*x, dy.permute(&inverse)?, &mut grads);
                }
                Op::Reshape { x } => {
                    let shape = self.shape(*x).to_vec();
                    send(*x, dy.reshape(shape)?, &mut grads);
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let g = dy.data()[0] / labels.len() as f32;
                    let l = probs.len() / labels.len();
                    let mut d = probs.clone();
                    for (row, &y) in d.chunks_mut(l).zip(labels) {
                        row[y] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= g);
                    }
                    send(*logits, Tensor::from_parts(self.shape(*logits).to_vec(), d), &mut grads);
                }
                Op::Bce { logits, labels } => {
                    let g = dy.data()[0] / labels.len() as f32;
                    let d = self
                        .value(*logits)
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&z, &y)| (crate::tensor::sigmoid(z) - y) * g)
                        .collect();
                    send(*logits, Tensor::from_parts(self.shape(*logits).to_vec(), d), &mut grads);
                }
                Op::WeightedSum { x, weights } => {
                    let g = dy.data()[0];
                    send(*x, weights.scale(g), &mut grads);
                }
            }
        }
        Ok(out)
    }
}

impl Gradients {
    /// Gradient of a leaf created with [`Graph::input_with_grad`].
    pub fn input(&self, v: Var) -> Option<&Tensor> {
        self.inputs.get(&v.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::TensorRole;

    #[test]
    fn sum_gradient_is_all_ones() {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store, Mode::Train, 0);
        let x = g.input_with_grad(Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap());
        let loss = g.weighted_sum(x, Tensor::ones(&[2, 3])).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.input(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_errors() {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store, Mode::Train, 0);
        let x = g.input(Tensor::ones(&[2]));
        let loss = g.weighted_sum(x, Tensor::ones(&[2])).unwrap();
        assert!(g.backward(loss).is_err(), "nothing requires grad");

        let empty = Graph::new(&store, Mode::Train, 0);
        assert!(empty.backward(Var(0)).unwrap_err().to_string().contains("without a recorded forward"));

        let mut g = Graph::new(&store, Mode::Train, 0);
        let x = g.input_with_grad(Tensor::from_vec(vec![f32::NAN]));
        let loss = g.weighted_sum(x, Tensor::ones(&[1])).unwrap();
        assert!(g.backward(loss).unwrap_err().to_string().contains("non-finite"));
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let mut store = ParameterStore::new();
        let w = store.register("feature_extractor.w", Tensor::ones(&[1, 2]), TensorRole::Parameter).unwrap();
        let b = store.register("feature_extractor.b", Tensor::ones(&[1]), TensorRole::Parameter).unwrap();
        let w2 = store.register("forgery_head.w", Tensor::ones(&[1, 1]), TensorRole::Parameter).unwrap();
        let b2 = store.register("forgery_head.b", Tensor::ones(&[1]), TensorRole::Parameter).unwrap();
        store.set_trainable(crate::nn::Partition::FeatureExtractor, false);
        let mut g = Graph::new(&store, Mode::Train, 0);
        let x = g.input(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let (wv, bv, w2v, b2v) = (g.param(w), g.param(b), g.param(w2), g.param(b2));
        let h = g.linear(x, wv, bv).unwrap();
        let y = g.linear(h, w2v, b2v).unwrap();
        let loss = g.bce_with_logits(y, &[1.0]).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.param(w).is_none() && grads.param(b).is_none());
        assert!(grads.param(w2).is_some() && grads.param(b2).is_some());
    }

    #[test]
    fn prelu_slope_gradient_at_negative_input() {
        let mut store = ParameterStore::new();
        let a = store.register("temporal_net.p", Tensor::from_vec(vec![0.25]), TensorRole::Parameter).unwrap();
        let mut g = Graph::new(&store, Mode::Eval, 0);
        let x = g.input(Tensor::new(vec![1, 1], vec![-2.0]).unwrap());
        let av = g.param(a);
        let y = g.prelu(x, av).unwrap();
        assert_eq!(g.value(y).data(), &[-0.5]);
        let loss = g.weighted_sum(y, Tensor::ones(&[1, 1])).unwrap();
        assert_eq!(g.backward(loss).unwrap().param(a).unwrap().data(), &[-2.0]);
    }

    #[test]
    fn dropout_eval_identity_and_train_expectation() {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store, Mode::Eval, 1);
        let x = g.input(Tensor::ones(&[1, 1000]));
        assert_eq!(g.dropout(x, 0.2).unwrap(), x);

        let mut g = Graph::new(&store, Mode::Train, 1);
        let x = g.input(Tensor::ones(&[1, 200_000]));
        let y = g.dropout(x, 0.2).unwrap();
        let mean = g.value(y).mean();
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }
}
