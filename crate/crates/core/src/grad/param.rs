use super::tensor::{Scalar, Tensor};

/// A trainable tensor with its gradient accumulator.
///
/// The gradient always has the value's shape and is zeroed between steps.
/// Non-trainable params still receive gradient flow-through (their `grad`
/// may be written) but the optimizer never updates their values.
#[derive(Debug, Clone)]
pub struct Param<S: Scalar> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
    pub trainable: bool,
}

impl<S: Scalar> Param<S> {
    pub fn new(value: Tensor<S>) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Param {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }
}
