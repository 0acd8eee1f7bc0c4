//! Finite-difference verification of the reverse pass.
//!
//! Each check builds a small random instance of one layer kind, reduces its
//! output to a scalar with a fixed random weighting and compares the analytic
//! gradient of every differentiable tensor against central differences with
//! step `h = 1e-2 * scale`, where `scale` is the RMS of the perturbed tensor.
//! The error measure is `|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)`
//! over the flattened gradient of each tensor.
//!
//! Inputs to piecewise-linear layers are drawn away from their kinks so the
//! finite differences never straddle one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::graph::{BatchNormSpec, ConvGeometry, Graph, Mode, PoolGeometry, Var};
use crate::nn::params::{ParamId, ParameterStore, TensorRole};
use crate::tensor::{Rng, Tensor};

pub const TOLERANCE: f64 = 1e-3;
pub const DEFAULT_INSTANCES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d,
    Conv2d,
    Conv3d,
    BatchNormTrain,
    BatchNormEval,
    Prelu,
    Relu,
    Linear,
    MaxPool,
    SpatialMean,
    TemporalMean,
    Residual,
    Concat,
    CrossEntropy,
    BinaryCrossEntropy,
}

impl LayerKind {
    pub const ALL: [LayerKind; 15] = [
        LayerKind::Conv1d,
        LayerKind::Conv2d,
        LayerKind::Conv3d,
        LayerKind::BatchNormTrain,
        LayerKind::BatchNormEval,
        LayerKind::Prelu,
        LayerKind::Relu,
        LayerKind::Linear,
        LayerKind::MaxPool,
        LayerKind::SpatialMean,
        LayerKind::TemporalMean,
        LayerKind::Residual,
        LayerKind::Concat,
        LayerKind::CrossEntropy,
        LayerKind::BinaryCrossEntropy,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckReport {
    pub kind: LayerKind,
    pub instances: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// One differentiable computation: inputs, parameters and a closure producing a scalar loss.
struct Instance {
    store: ParameterStore,
    inputs: Vec<Tensor>,
    build: Build,
}

impl Instance {
    fn loss(&self, store: &ParameterStore, inputs: &[Tensor]) -> Result<f64> {
        let mut g = Graph::new(store, Mode::Train, 0);
        let vars: Vec<Var> = inputs.iter().map(|t| g.input_with_grad(t.clone())).collect();
        let l = (self.build)(&mut g, &vars)?;
        Ok(g.value(l).item()? as f64)
    }

    fn max_error(&self) -> Result<f64> {
        let mut g = Graph::new(&self.store, Mode::Train, 0);
        let vars: Vec<Var> = self.inputs.iter().map(|t| g.input_with_grad(t.clone())).collect();
        let l = (self.build)(&mut g, &vars)?;
        let grads = g.backward(l)?;

        let mut worst = 0.0f64;
        for (k, v) in vars.iter().enumerate() {
            let analytic = grads.input(*v).cloned().unwrap_or_else(|| Tensor::zeros(self.inputs[k].shape()));
            let numeric = numeric_grad(&self.inputs[k], |t| {
                let mut inputs = self.inputs.clone();
                inputs[k] = t;
                self.loss(&self.store, &inputs)
            })?;
            worst = worst.max(relative_error(analytic.data(), &numeric));
        }
        let ids: Vec<ParamId> = self.store.ids().filter(|&id| self.store.requires_grad(id)).collect();
        for id in ids {
            let analytic = grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(self.store.get(id).shape()));
            let numeric = numeric_grad(self.store.get(id), |t| {
                let mut store = self.store.clone();
                *store.get_mut(id) = t;
                self.loss(&store, &self.inputs)
            })?;
            worst = worst.max(relative_error(analytic.data(), &numeric));
        }
        Ok(worst)
    }
}

fn numeric_grad(x: &Tensor, f: impl Fn(Tensor) -> Result<f64>) -> Result<Vec<f32>> {
    let rms = (x.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.numel() as f64).sqrt();
    let h = 1e-2 * rms.max(1e-1);
    let mut out = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h as f32;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h as f32;
        // Divide by the step actually representable in f32.
        let step = plus.data()[i] as f64 - minus.data()[i] as f64;
        out.push(((f(plus)? - f(minus)?) / step) as f32);
    }
    Ok(out)
}

pub fn relative_error(analytic: &[f32], numeric: &[f32]) -> f64 {
    let norm = |v: &[f32]| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let diff: f64 = analytic.iter().zip(numeric).map(|(&a, &n)| (a as f64 - n as f64).powi(2)).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Values in `[-1, -0.1] ∪ [0.1, 1]`, away from the kink at zero.
fn off_kink(rng: &mut Rng, shape: &[usize]) -> Tensor {
    rng.uniform_tensor(shape).map(|u| {
        let m = 0.1 + 0.9 * (2.0 * u - 1.0).abs();
        if u < 0.5 {
            -m
        } else {
            m
        }
    })
}

/// A random permutation of well-separated values so every pooling window has a clear maximum.
fn distinct(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f32> = (0..n).map(|i| (i as f32 - n as f32 / 2.0) * 0.2).collect();
    rng.shuffle(&mut v);
    Tensor::from_parts(shape.to_vec(), v)
}

fn param(store: &mut ParameterStore, name: &str, t: Tensor) -> ParamId {
    store.register(name, t, TensorRole::Parameter).expect("unique gradcheck parameter name")
}

/// Reduces `y` with a fixed random weighting so every output element matters.
fn weighted(g: &mut Graph, y: Var, rng: &mut Rng) -> Result<Var> {
    let w = rng.normal_tensor(g.shape(y), 0.0, 1.0);
    g.weighted_sum(y, w)
}

fn instance(kind: LayerKind, rng: &mut Rng) -> Instance {
    let mut store = ParameterStore::new();
    let mut r = rng.substream(&[0]);
    let readout = rng.substream(&[1]);
    let dim = |r: &mut Rng, lo: usize, hi: usize| lo + r.below(hi - lo + 1);
    macro_rules! done {
        ($inputs:expr, $body:expr) => {{
            let body = $body;
            Instance {
                store,
                inputs: $inputs,
                build: Box::new(move |g: &mut Graph, v: &[Var]| {
                    let mut ro = readout.clone();
                    let y = body(g, v)?;
                    weighted(g, y, &mut ro)
                }),
            }
        }};
    }
    match kind {
        LayerKind::Conv1d | LayerKind::Conv2d | LayerKind::Conv3d => {
            let rank = match kind {
                LayerKind::Conv1d => 1,
                LayerKind::Conv2d => 2,
                _ => 3,
            };
            let (n, ci, co) = (dim(&mut r, 1, 2), dim(&mut r, 1, 3), dim(&mut r, 1, 3));
            let mut xs = vec![n, ci];
            let mut ws = vec![co, ci];
            let mut stride = Vec::new();
            let mut pad = Vec::new();
            let mut dil = Vec::new();
            for _ in 0..rank {
                let k = dim(&mut r, 1, 3);
                let d = if rank == 1 { dim(&mut r, 1, 2) } else { 1 };
                xs.push(d * (k - 1) + dim(&mut r, 2, 4));
                ws.push(k);
                stride.push(dim(&mut r, 1, 2));
                pad.push(r.below(2));
                dil.push(d);
            }
            let geom = ConvGeometry {
                stride,
                dilation: dil,
                padding: crate::nn::graph::Padding::Explicit(pad),
            };
            let w = param(&mut store, "feature_extractor.conv.weight", r.normal_tensor(&ws, 0.0, 0.5));
            let b = param(&mut store, "feature_extractor.conv.bias", r.normal_tensor(&[co], 0.0, 0.5));
            done!(vec![r.normal_tensor(&xs, 0.0, 1.0)], move |g: &mut Graph, v: &[Var]| {
                let (w, b) = (g.param(w), g.param(b));
                g.conv(v[0], w, Some(b), &geom)
            })
        }
        LayerKind::BatchNormTrain | LayerKind::BatchNormEval => {
            let train = kind == LayerKind::BatchNormTrain;
            let (n, c, s) = (dim(&mut r, 2, 3), dim(&mut r, 1, 3), dim(&mut r, 2, 5));
            let gamma = param(&mut store, "temporal_net.bn.weight", r.uniform_tensor(&[c]).map(|u| 0.5 + u));
            let beta = param(&mut store, "temporal_net.bn.bias", r.normal_tensor(&[c], 0.0, 0.5));
            let rm = store.register("temporal_net.bn.running_mean", r.normal_tensor(&[c], 0.0, 0.5), TensorRole::Buffer).unwrap();
            let rv = store
                .register("temporal_net.bn.running_var", r.uniform_tensor(&[c]).map(|u| 0.5 + u), TensorRole::Buffer)
                .unwrap();
            done!(vec![r.normal_tensor(&[n, c, s], 0.5, 1.0)], move |g: &mut Graph, v: &[Var]| {
                let (ga, be) = (g.param(gamma), g.param(beta));
                g.batch_norm(
                    v[0],
                    ga,
                    be,
                    BatchNormSpec { running_mean: rm, running_var: rv, momentum: 0.1, eps: 1e-5, train },
                )
            })
        }
        LayerKind::Prelu => {
            let (n, c, s) = (dim(&mut r, 1, 3), dim(&mut r, 1, 3), dim(&mut r, 1, 4));
            let a = param(&mut store, "temporal_net.prelu.weight", r.uniform_tensor(&[c]).map(|u| 0.1 + 0.4 * u));
            done!(vec![off_kink(&mut r, &[n, c, s])], move |g: &mut Graph, v: &[Var]| {
                let a = g.param(a);
                g.prelu(v[0], a)
            })
        }
        LayerKind::Relu => {
            let shape = [dim(&mut r, 1, 3), dim(&mut r, 1, 3), dim(&mut r, 1, 4)];
            done!(vec![off_kink(&mut r, &shape)], |g: &mut Graph, v: &[Var]| Ok(g.relu(v[0])))
        }
        LayerKind::Linear => {
            let (n, din, dout) = (dim(&mut r, 1, 4), dim(&mut r, 1, 5), dim(&mut r, 1, 4));
            let w = param(&mut store, "lipread_head.linear.weight", r.normal_tensor(&[dout, din], 0.0, 0.5));
            let b = param(&mut store, "lipread_head.linear.bias", r.normal_tensor(&[dout], 0.0, 0.5));
            done!(vec![r.normal_tensor(&[n, din], 0.0, 1.0)], move |g: &mut Graph, v: &[Var]| {
                let (w, b) = (g.param(w), g.param(b));
                g.linear(v[0], w, b)
            })
        }
        LayerKind::MaxPool => {
            let rank = dim(&mut r, 1, 3);
            let mut shape = vec![dim(&mut r, 1, 2), dim(&mut r, 1, 2)];
            let (mut kernel, mut stride, mut padding) = (Vec::new(), Vec::new(), Vec::new());
            for _ in 0..rank {
                let k = dim(&mut r, 1, 3);
                shape.push(k + dim(&mut r, 0, 3));
                kernel.push(k);
                stride.push(dim(&mut r, 1, 2));
                padding.push(if k >= 2 { r.below(2) } else { 0 });
            }
            let geom = PoolGeometry { kernel, stride, padding };
            done!(vec![distinct(&mut r, &shape)], move |g: &mut Graph, v: &[Var]| g.max_pool(v[0], &geom))
        }
        LayerKind::SpatialMean => {
            let shape = [dim(&mut r, 1, 3), dim(&mut r, 1, 3), dim(&mut r, 1, 4), dim(&mut r, 1, 4)];
            done!(vec![r.normal_tensor(&shape, 0.0, 1.0)], |g: &mut Graph, v: &[Var]| g.spatial_mean(v[0]))
        }
        LayerKind::TemporalMean => {
            let shape = [dim(&mut r, 1, 3), dim(&mut r, 1, 3), dim(&mut r, 1, 6)];
            done!(vec![r.normal_tensor(&shape, 0.0, 1.0)], |g: &mut Graph, v: &[Var]| g.mean_axis(v[0], 2))
        }
        LayerKind::Residual => {
            let (n, c, t) = (dim(&mut r, 1, 2), dim(&mut r, 1, 3), dim(&mut r, 3, 6));
            let w = param(&mut store, "temporal_net.res.weight", r.normal_tensor(&[c, c, 3], 0.0, 0.5));
            done!(vec![r.normal_tensor(&[n, c, t], 0.0, 1.0)], move |g: &mut Graph, v: &[Var]| {
                let w = g.param(w);
                let h = g.conv(v[0], w, None, &ConvGeometry::same(1))?;
                g.add(h, v[0])
            })
        }
        LayerKind::Concat => {
            let (n, t) = (dim(&mut r, 1, 2), dim(&mut r, 2, 5));
            let widths: Vec<usize> = (0..dim(&mut r, 2, 3)).map(|_| dim(&mut r, 1, 3)).collect();
            let inputs = widths.iter().map(|&c| r.normal_tensor(&[n, c, t], 0.0, 1.0)).collect();
            let total: usize = widths.iter().sum();
            let w = param(&mut store, "temporal_net.mix.weight", r.normal_tensor(&[2, total, 1], 0.0, 0.5));
            done!(inputs, move |g: &mut Graph, v: &[Var]| {
                let cat = g.concat(v)?;
                let w = g.param(w);
                g.conv(cat, w, None, &ConvGeometry::same(1))
            })
        }
        LayerKind::CrossEntropy => {
            let (n, l) = (dim(&mut r, 1, 4), dim(&mut r, 2, 6));
            let labels: Vec<usize> = (0..n).map(|_| r.below(l)).collect();
            Instance {
                store,
                inputs: vec![r.normal_tensor(&[n, l], 0.0, 2.0)],
                build: Box::new(move |g, v| g.cross_entropy(v[0], &labels)),
            }
        }
        LayerKind::BinaryCrossEntropy => {
            let n = dim(&mut r, 1, 6);
            let labels: Vec<f32> = (0..n).map(|_| r.below(2) as f32).collect();
            Instance {
                store,
                inputs: vec![r.normal_tensor(&[n, 1], 0.0, 2.0)],
                build: Box::new(move |g, v| g.bce_with_logits(v[0], &labels)),
            }
        }
    }
}

/// Checks `instances` random instances of `kind`.
pub fn check_layer(kind: LayerKind, instances: usize, seed: u64) -> Result<CheckReport> {
    if instances == 0 {
        return Err(Error::InvalidArgument("gradient check needs at least one instance".into()));
    }
    let root = Rng::new(seed).substream_named(&format!("{kind:?}"));
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = root.substream(&[i as u64]);
        let err = instance(kind, &mut rng).max_error()?;
        if !err.is_finite() {
            return Err(Error::Gradient(format!("{kind:?} instance {i} produced a non-finite error")));
        }
        worst = worst.max(err);
    }
    Ok(CheckReport { kind, instances, max_relative_error: worst, passed: worst <= TOLERANCE })
}

pub fn check_all(instances: usize, seed: u64) -> Result<Vec<CheckReport>> {
    LayerKind::ALL.iter().map(|&k| check_layer(k, instances, seed)).collect()
}
