//! Minimal convolutional building blocks with hand-written backward passes.
//!
//! Forward calls return a trace value holding what the matching backward call needs, so the
//! same layer can be applied several times per step and differentiated through each use.

mod block;
mod conv;
mod ops;

pub use block::{Activation, ConvBlock, ConvBlockTrace};
pub use conv::{Conv2d, Padding};
pub use ops::{
    instance_norm, instance_norm_backward, softmax_channels, softmax_channels_backward,
    upsample_nearest2, upsample_nearest2_backward, INSTANCE_NORM_EPS,
};

use crate::scalar::Scalar;

/// A learnable array with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Vec<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Named, ordered access to every parameter of a model.
pub trait Parameters<T: Scalar> {
    fn params(&self) -> Vec<(String, &Param<T>)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)>;

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }
}
