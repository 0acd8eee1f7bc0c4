use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f32` array. The last axis varies fastest.
///
/// A rank-0 tensor (empty shape) holds a single scalar. Every extent is
/// strictly positive, so `data.len() == shape.iter().product()` always holds.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        let head = &self.data[..self.data.len().min(PREVIEW)];
        write!(f, "Tensor{:?} {:?}", self.shape, head)?;
        if self.data.len() > PREVIEW {
            write!(f, "..")?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidShape { shape, reason: "extents must be positive".into() });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("expected {numel} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Constructor for internal call sites that have already checked the sizes.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "shape {shape:?}");
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero extent in {shape:?}");
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.data.len() != 1 {
            return Err(Error::InvalidShape { shape: self.shape.clone(), reason: "not a scalar".into() });
        }
        Ok(self.data[0])
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() || shape.contains(&0) {
            return Err(Error::shape(&self.shape, &shape));
        }
        Ok(Tensor { shape, data: self.data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(ElementwiseOp::Add, self, Operand::Tensor(other))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(ElementwiseOp::Sub, self, Operand::Tensor(other))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(ElementwiseOp::Mul, self, Operand::Tensor(other))
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn exp(&self) -> Tensor {
        self.map(f32::exp)
    }

    pub fn ln(&self) -> Tensor {
        self.map(f32::ln)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|v| v.max(0.0))
    }

    pub fn sum(&self) -> f32 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() as f32
    }

    pub fn mean(&self) -> f32 {
        (self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64) as f32
    }

    /// Axis-permuted copy: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::InvalidArgument(format!("bad permutation {axes:?} for rank {rank}")));
        }
        let in_strides = strides(&self.shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut index = vec![0usize; rank];
        let mut offset = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[offset]);
            for ax in (0..rank).rev() {
                index[ax] += 1;
                offset += src_strides[ax];
                if index[ax] < out_shape[ax] {
                    break;
                }
                offset -= src_strides[ax] * out_shape[ax];
                index[ax] = 0;
            }
        }
        Ok(Tensor { shape: out_shape, data: out })
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0` and comparing NaN payloads.
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Logistic function, evaluated without overflow for large `|v|`.
pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Scale,
    Sigmoid,
    Exp,
    Log,
    Max0,
}

/// Right-hand operand of [`elementwise`]. Only scalar-against-tensor broadcasting is supported.
#[derive(Clone, Copy, Debug)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f32),
    None,
}

pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Operand<'_>) -> Result<Tensor> {
    use ElementwiseOp::*;
    let binary = |f: fn(f32, f32) -> f32| -> Result<Tensor> {
        match b {
            Operand::Tensor(t) if t.shape == a.shape => Ok(Tensor {
                shape: a.shape.clone(),
                data: a.data.iter().zip(&t.data).map(|(&x, &y)| f(x, y)).collect(),
            }),
            Operand::Tensor(t) if t.rank() == 0 => Ok(a.map(|x| f(x, t.data[0]))),
            Operand::Tensor(t) => Err(Error::shape(&a.shape, &t.shape)),
            Operand::Scalar(s) => Ok(a.map(|x| f(x, s))),
            Operand::None => Err(Error::InvalidArgument(format!("{op:?} needs a second operand"))),
        }
    };
    match op {
        Add => binary(|x, y| x + y),
        Sub => binary(|x, y| x - y),
        Mul | Scale => binary(|x, y| x * y),
        Sigmoid => Ok(a.sigmoid()),
        Exp => Ok(a.exp()),
        Log => Ok(a.ln()),
        Max0 => Ok(a.relu()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

/// Reduces along `axis`, removing it from the shape. Sums accumulate in `f64`.
pub fn reduce(op: ReduceOp, a: &Tensor, axis: usize) -> Result<Tensor> {
    let rank = a.rank();
    if axis >= rank {
        return Err(Error::AxisOutOfRange { axis, rank });
    }
    let outer: usize = a.shape[..axis].iter().product();
    let len = a.shape[axis];
    let inner: usize = a.shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let lane = (0..len).map(|k| a.data[(o * len + k) * inner + i]);
            let v = match op {
                ReduceOp::Sum => lane.map(|v| v as f64).sum::<f64>() as f32,
                ReduceOp::Mean => (lane.map(|v| v as f64).sum::<f64>() / len as f64) as f32,
                ReduceOp::Max => lane.fold(f32::NEG_INFINITY, f32::max),
            };
            out.push(v);
        }
    }
    let mut shape = a.shape.clone();
    shape.remove(axis);
    Ok(Tensor { shape, data: out })
}
