//! Adam parameter updates with bias correction.

use super::{Result, Scalar, Tensor, TensorError};

/// Optimizer state: one first/second moment buffer per parameter tensor,
/// plus the shared step counter and hyperparameters.
///
/// Defaults are beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8; the learning
/// rate is the caller's choice (the training default is 0.001).
pub struct AdamState<T: Scalar> {
    learning_rate: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    step: u64,
    slots: Vec<Slot<T>>,
}

struct Slot<T> {
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(learning_rate: T) -> Self {
        AdamState {
            learning_rate,
            beta1: T::from_real(0.9),
            beta2: T::from_real(0.999),
            epsilon: T::from_real(1e-8),
            step: 0,
            slots: Vec::new(),
        }
    }

    pub fn learning_rate(&self) -> T {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one Adam update to every parameter, in iteration order:
    ///
    /// `t += 1; m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2;`
    /// `theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)`.
    ///
    /// Moment buffers are created on the first call; every parameter must
    /// have a populated gradient.
    pub fn step<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut Tensor<T>>,
    {
        self.step += 1;
        let t = self.step as i32;
        let m_corr = T::one() - self.beta1.powi(t);
        let v_corr = T::one() - self.beta2.powi(t);
        let first_step = self.step == 1;

        let mut index = 0usize;
        for param in params {
            let numel = param.numel();
            if first_step {
                self.slots.push(Slot {
                    m: vec![T::zero(); numel],
                    v: vec![T::zero(); numel],
                });
            }
            let slot = self.slots.get_mut(index).ok_or_else(|| {
                TensorError::Contract(format!(
                    "adam step saw more parameters ({}) than registered",
                    index + 1
                ))
            })?;
            if slot.m.len() != numel {
                return Err(TensorError::Contract(format!(
                    "adam slot {} sized for {} elements, parameter has {}",
                    index,
                    slot.m.len(),
                    numel
                )));
            }
            let has_grad = param.grad().is_some();
            if !has_grad {
                return Err(TensorError::Contract(format!(
                    "adam step requires a populated gradient (parameter {})",
                    index
                )));
            }
            // Split borrows: read grad alongside mutable data.
            let (data, grad) = {
                let g = param.grad().expect("checked above").to_vec();
                (param.data_mut(), g)
            };
            for (((p, &g), m), v) in data
                .iter_mut()
                .zip(grad.iter())
                .zip(slot.m.iter_mut())
                .zip(slot.v.iter_mut())
            {
                *m = self.beta1 * *m + (T::one() - self.beta1) * g;
                *v = self.beta2 * *v + (T::one() - self.beta2) * g * g;
                let m_hat = *m / m_corr;
                let v_hat = *v / v_corr;
                *p = *p - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            index += 1;
        }
        if !first_step && index != self.slots.len() {
            return Err(TensorError::Contract(format!(
                "adam step saw {} parameters, expected {}",
                index,
                self.slots.len()
            )));
        }
        Ok(())
    }
}
