//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: it provides exactly the operations the
//! colorization network needs (`conv2d`, `relu`, `tanh`, nearest-neighbor
//! upsampling, depth concatenation, spatial tiling, MSE) plus an Adam
//! optimizer. Computation graphs are rebuilt on every forward pass
//! (define-by-run); `Graph::backward` walks the recorded operations once in
//! reverse and accumulates gradients into every tensor that requires them.
//!
//! Storage is generic over [`Scalar`] so the same code paths run in `f32`
//! for training and in `f64` for the finite-difference test harness.

pub mod adam;
pub mod check;
mod conv;
mod graph;
mod linalg;

pub use adam::AdamState;
pub use graph::{Graph, Var};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt;
use thiserror::Error;

/// Element type the engine can compute with.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    /// Lossy conversion from `f64`, for constants and hyperparameters.
    fn from_real(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 constant")
    }

    /// Lossy conversion to `f64`, for reporting.
    fn to_real(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract error: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense n-dimensional array in row-major order.
///
/// `grad`, when present, always has the same element count as `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The value of a scalar tensor.
    pub fn item(&self) -> Result<T> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(TensorError::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    /// Interpret as `[channels, height, width]`.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(TensorError::Shape(format!(
                "expected 3-d tensor, got shape {:?}",
                other
            ))),
        }
    }

    /// Interpret as `[out_channels, in_channels, kh, kw]`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[o, i, kh, kw] => Ok((o, i, kh, kw)),
            other => Err(TensorError::Shape(format!(
                "expected 4-d tensor, got shape {:?}",
                other
            ))),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn with_requires_grad(mut self, requires: bool) -> Self {
        self.requires_grad = requires;
        self
    }

    pub fn set_requires_grad(&mut self, requires: bool) {
        self.requires_grad = requires;
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub(crate) fn set_grad(&mut self, grad: Vec<T>) {
        debug_assert_eq!(grad.len(), self.data.len());
        self.grad = Some(grad);
    }

    /// Allocate a zero gradient buffer if none is present.
    pub fn ensure_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.data.len()]);
        }
    }

    pub fn zero_grad(&mut self) {
        match self.grad.as_mut() {
            Some(g) => g.iter_mut().for_each(|v| *v = T::zero()),
            None => self.ensure_grad(),
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Add `scale * contribution` into this tensor's gradient buffer.
    pub fn accumulate_grad(&mut self, contribution: &[T], scale: T) -> Result<()> {
        if contribution.len() != self.data.len() {
            return Err(TensorError::Shape(format!(
                "gradient contribution has {} elements, tensor has {}",
                contribution.len(),
                self.data.len()
            )));
        }
        self.ensure_grad();
        let grad = self.grad.as_mut().expect("just ensured");
        for (g, c) in grad.iter_mut().zip(contribution) {
            *g = scale.mul_add(*c, *g);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
