use super::ops::{instance_norm, instance_norm_backward, upsample_nearest2, upsample_nearest2_backward};
use super::{Conv2d, Param};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(T::zero()),
            Activation::LeakyRelu(slope) => {
                if v > T::zero() {
                    v
                } else {
                    v * T::lit(slope)
                }
            }
        }
    }

    #[inline]
    fn derivative<T: Scalar>(self, pre: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu(slope) => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::lit(slope)
                }
            }
        }
    }
}

/// `[upsample x2] -> conv -> [instance norm] -> activation`.
#[derive(Clone, Debug)]
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
    pub upsample: bool,
    pub norm: bool,
    pub act: Activation,
}

/// Saved activations of one [`ConvBlock::forward`] call.
#[derive(Clone, Debug)]
pub struct ConvBlockTrace<T> {
    /// Block input (before upsampling).
    input: Tensor<T>,
    /// Activation input: the normalized conv output, or the raw conv output without norm.
    pre: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> ConvBlock<T> {
    /// A following instance norm cancels any conv bias, so normalized blocks carry none.
    pub fn new(conv: Conv2d<T>, upsample: bool, norm: bool, act: Activation) -> Self {
        let conv = if norm { conv.without_bias() } else { conv };
        ConvBlock {
            conv,
            upsample,
            norm,
            act,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, ConvBlockTrace<T>) {
        let mut pre = if self.upsample {
            self.conv.forward(&upsample_nearest2(x))
        } else {
            self.conv.forward(x)
        };
        let inv_std = if self.norm {
            instance_norm(&mut pre)
        } else {
            Vec::new()
        };
        let out = match self.act {
            Activation::Identity => pre.clone(),
            act => pre.map(|v| act.apply(v)),
        };
        let trace = ConvBlockTrace {
            input: x.clone(),
            pre,
            inv_std,
        };
        (out, trace)
    }

    pub fn backward(
        &mut self,
        trace: &ConvBlockTrace<T>,
        mut grad: Tensor<T>,
        need_input: bool,
        need_params: bool,
    ) -> Option<Tensor<T>> {
        if self.act != Activation::Identity {
            let act = self.act;
            for (g, &p) in grad.data_mut().iter_mut().zip(trace.pre.data()) {
                *g *= act.derivative(p);
            }
        }
        if self.norm {
            instance_norm_backward(&trace.pre, &trace.inv_std, &mut grad);
        }
        if self.upsample {
            let up = upsample_nearest2(&trace.input);
            self.conv
                .backward(&up, &grad, need_input, need_params)
                .map(|g| upsample_nearest2_backward(&g))
        } else {
            self.conv.backward(&trace.input, &grad, need_input, need_params)
        }
    }

    pub fn params_mut_into<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        let has_bias = self.conv.has_bias();
        out.push((format!("{prefix}.weight"), &mut self.conv.weight));
        if has_bias {
            out.push((format!("{prefix}.bias"), &mut self.conv.bias));
        }
    }

    pub fn params_into<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((format!("{prefix}.weight"), &self.conv.weight));
        if self.conv.has_bias() {
            out.push((format!("{prefix}.bias"), &self.conv.bias));
        }
    }
}
