//! Define-by-run computation graph.
//!
//! Every operation appends one node holding its output tensor and a record
//! of its inputs, so the node list is topologically ordered by construction.
//! `backward` walks the list once in reverse, accumulating gradients; a
//! tensor used by several operations receives the sum of its contributions.

use super::conv;
use super::{Result, Scalar, Tensor, TensorError};

/// Handle to a tensor stored in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Var,
        stride: usize,
    },
    Relu {
        input: Var,
    },
    Tanh {
        input: Var,
    },
    Upsample2x {
        input: Var,
    },
    ConcatDepth {
        a: Var,
        b: Var,
    },
    TileSpatial {
        input: Var,
    },
    MseLoss {
        pred: Var,
        target: Var,
    },
    Sum {
        input: Var,
    },
}

struct Node<T> {
    tensor: Tensor<T>,
    op: Op,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a tensor as a graph input.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        self.push(tensor, Op::Leaf)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].tensor
    }

    /// Gradient of `var` after a `backward` call, if one was recorded.
    pub fn grad(&self, var: Var) -> Option<&[T]> {
        self.nodes[var.0].tensor.grad()
    }

    fn push(&mut self, tensor: Tensor<T>, op: Op) -> Var {
        self.nodes.push(Node { tensor, op });
        Var(self.nodes.len() - 1)
    }

    fn flows_grad(&self, var: Var) -> bool {
        self.nodes[var.0].tensor.requires_grad()
    }

    fn result_of(&mut self, inputs: &[Var], tensor: Tensor<T>, op: Op) -> Var {
        let requires = inputs.iter().any(|v| self.flows_grad(*v));
        self.push(tensor.with_requires_grad(requires), op)
    }

    /// Same-padded cross-correlation with per-channel bias.
    ///
    /// `input: [C_in,H,W]`, `kernels: [C_out,C_in,k,k]`, `bias: [C_out]`;
    /// the output is `[C_out, ceil(H/stride), ceil(W/stride)]`.
    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Var, stride: usize) -> Result<Var> {
        let out = conv::forward(
            self.value(input),
            self.value(kernels),
            self.value(bias),
            stride,
        )?;
        Ok(self.result_of(
            &[input, kernels, bias],
            out,
            Op::Conv2d {
                input,
                kernels,
                bias,
                stride,
            },
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.result_of(&[input], out, Op::Relu { input })
    }

    pub fn tanh_act(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v.tanh()).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.result_of(&[input], out, Op::Tanh { input })
    }

    /// Nearest-neighbor 2x upsampling: `[C,H,W] -> [C,2H,2W]`.
    pub fn upsample_nearest2x(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (c, h, w) = x.dims3()?;
        let mut data = vec![T::zero(); c * 4 * h * w];
        let (oh, ow) = (2 * h, 2 * w);
        for ci in 0..c {
            for y in 0..h {
                let src = &x.data()[(ci * h + y) * w..][..w];
                for dy in 0..2 {
                    let row = &mut data[(ci * oh + 2 * y + dy) * ow..][..ow];
                    for (xx, &v) in src.iter().enumerate() {
                        row[2 * xx] = v;
                        row[2 * xx + 1] = v;
                    }
                }
            }
        }
        let out = Tensor::new(vec![c, oh, ow], data)?;
        Ok(self.result_of(&[input], out, Op::Upsample2x { input }))
    }

    /// Concatenate along the channel axis: `[C1,H,W] + [C2,H,W] -> [C1+C2,H,W]`.
    pub fn concat_depth(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ca, ha, wa) = self.value(a).dims3()?;
        let (cb, hb, wb) = self.value(b).dims3()?;
        if (ha, wa) != (hb, wb) {
            return Err(TensorError::Shape(format!(
                "concat_depth spatial mismatch: {}x{} vs {}x{}",
                ha, wa, hb, wb
            )));
        }
        let mut data = Vec::with_capacity((ca + cb) * ha * wa);
        data.extend_from_slice(self.value(a).data());
        data.extend_from_slice(self.value(b).data());
        let out = Tensor::new(vec![ca + cb, ha, wa], data)?;
        Ok(self.result_of(&[a, b], out, Op::ConcatDepth { a, b }))
    }

    /// Broadcast a vector `[D]` to `[D,h,w]` with identical values at every
    /// spatial position.
    pub fn tile_spatial(&mut self, input: Var, h: usize, w: usize) -> Result<Var> {
        let x = self.value(input);
        let &[d] = x.shape() else {
            return Err(TensorError::Shape(format!(
                "tile_spatial expects a vector, got shape {:?}",
                x.shape()
            )));
        };
        if h == 0 || w == 0 {
            return Err(TensorError::Shape(
                "tile_spatial target dims must be positive".into(),
            ));
        }
        let mut data = vec![T::zero(); d * h * w];
        for (di, plane) in data.chunks_mut(h * w).enumerate() {
            plane.iter_mut().for_each(|v| *v = x.data()[di]);
        }
        let out = Tensor::new(vec![d, h, w], data)?;
        Ok(self.result_of(&[input], out, Op::TileSpatial { input }))
    }

    /// Mean square error over chroma planes, with the `1/(2HW)` factor.
    ///
    /// For `[C,H,W]` inputs this is `sum((pred - target)^2) / (2*H*W)`.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let p = self.value(pred);
        let t = self.value(target);
        if p.shape() != t.shape() {
            return Err(TensorError::Shape(format!(
                "mse_loss shape mismatch: {:?} vs {:?}",
                p.shape(),
                t.shape()
            )));
        }
        let (_, h, w) = p.dims3()?;
        let mut acc = T::zero();
        for (&pv, &tv) in p.data().iter().zip(t.data()) {
            let d = pv - tv;
            acc = d.mul_add(d, acc);
        }
        let denom = T::from_real(2.0 * h as f64 * w as f64);
        let out = Tensor::scalar(acc / denom);
        Ok(self.result_of(&[pred, target], out, Op::MseLoss { pred, target }))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, input: Var) -> Var {
        let total = self
            .value(input)
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        let out = Tensor::scalar(total);
        self.result_of(&[input], out, Op::Sum { input })
    }

    /// Reverse-mode gradient accumulation from a scalar loss.
    ///
    /// After this call every tensor in the graph with `requires_grad` has a
    /// populated gradient buffer; tensors not reachable from `loss` keep a
    /// zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &gout, &mut grads)?;
            if self.nodes[i].tensor.requires_grad() {
                self.nodes[i].tensor.set_grad(gout);
            }
        }

        for node in &mut self.nodes {
            if node.tensor.requires_grad() && node.tensor.grad().is_none() {
                node.tensor.ensure_grad();
            }
        }
        Ok(())
    }

    fn add_grad(&self, grads: &mut [Option<Vec<T>>], var: Var, contribution: &[T]) {
        let numel = self.nodes[var.0].tensor.numel();
        debug_assert_eq!(contribution.len(), numel);
        let buf = grads[var.0].get_or_insert_with(|| vec![T::zero(); numel]);
        for (g, c) in buf.iter_mut().zip(contribution) {
            *g = *g + *c;
        }
    }

    fn propagate(&self, i: usize, gout: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernels,
                bias,
                stride,
            } => {
                let (gi, gk, gb) = conv::backward(
                    self.value(input),
                    self.value(kernels),
                    stride,
                    gout,
                    self.flows_grad(input),
                    self.flows_grad(kernels),
                    self.flows_grad(bias),
                )?;
                if let Some(g) = gi {
                    self.add_grad(grads, input, &g);
                }
                if let Some(g) = gk {
                    self.add_grad(grads, kernels, &g);
                }
                if let Some(g) = gb {
                    self.add_grad(grads, bias, &g);
                }
            }
            Op::Relu { input } => {
                if self.flows_grad(input) {
                    let x = self.value(input).data();
                    let g: Vec<T> = x
                        .iter()
                        .zip(gout)
                        .map(|(&xv, &gv)| if xv > T::zero() { gv } else { T::zero() })
                        .collect();
                    self.add_grad(grads, input, &g);
                }
            }
            Op::Tanh { input } => {
                if self.flows_grad(input) {
                    let y = self.nodes[i].tensor.data();
                    let g: Vec<T> = y
                        .iter()
                        .zip(gout)
                        .map(|(&yv, &gv)| gv * (T::one() - yv * yv))
                        .collect();
                    self.add_grad(grads, input, &g);
                }
            }
            Op::Upsample2x { input } => {
                if self.flows_grad(input) {
                    let (c, h, w) = self.value(input).dims3().expect("validated at forward");
                    let ow = 2 * w;
                    let mut g = vec![T::zero(); c * h * w];
                    for ci in 0..c {
                        for y in 0..h {
                            let dst = &mut g[(ci * h + y) * w..][..w];
                            for dy in 0..2 {
                                let row = &gout[(ci * 2 * h + 2 * y + dy) * ow..][..ow];
                                for (xx, d) in dst.iter_mut().enumerate() {
                                    *d = *d + row[2 * xx] + row[2 * xx + 1];
                                }
                            }
                        }
                    }
                    self.add_grad(grads, input, &g);
                }
            }
            Op::ConcatDepth { a, b } => {
                let na = self.value(a).numel();
                if self.flows_grad(a) {
                    self.add_grad(grads, a, &gout[..na]);
                }
                if self.flows_grad(b) {
                    self.add_grad(grads, b, &gout[na..]);
                }
            }
            Op::TileSpatial { input } => {
                if self.flows_grad(input) {
                    let d = self.value(input).numel();
                    let plane = gout.len() / d;
                    let g: Vec<T> = gout
                        .chunks(plane)
                        .map(|ch| ch.iter().fold(T::zero(), |acc, &v| acc + v))
                        .collect();
                    self.add_grad(grads, input, &g);
                }
            }
            Op::MseLoss { pred, target } => {
                let p = self.value(pred);
                let t = self.value(target);
                let (_, h, w) = p.dims3().expect("validated at forward");
                let scale = gout[0] / T::from_real(h as f64 * w as f64);
                if self.flows_grad(pred) {
                    let g: Vec<T> = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(&pv, &tv)| scale * (pv - tv))
                        .collect();
                    self.add_grad(grads, pred, &g);
                }
                if self.flows_grad(target) {
                    let g: Vec<T> = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(&pv, &tv)| -scale * (pv - tv))
                        .collect();
                    self.add_grad(grads, target, &g);
                }
            }
            Op::Sum { input } => {
                if self.flows_grad(input) {
                    let n = self.value(input).numel();
                    self.add_grad(grads, input, &vec![gout[0]; n]);
                }
            }
        }
        Ok(())
    }
}
