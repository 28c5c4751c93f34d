//! Element-wise activations. Backward functions take the forward input (or
//! output, where cheaper) and the upstream gradient.

use rand::Rng;

use crate::engine::{Scalar, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let a = F::from_f64(LEAKY_SLOPE);
    x.map(|v| if v > F::zero() { v } else { a * v })
}

pub fn leaky_relu_backward<F: Scalar>(x: &Tensor<F>, grad: &Tensor<F>) -> Tensor<F> {
    let a = F::from_f64(LEAKY_SLOPE);
    zip(x, grad, |v, g| if v > F::zero() { g } else { a * g })
}

pub fn relu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|v| v.max(F::zero()))
}

pub fn relu_backward<F: Scalar>(x: &Tensor<F>, grad: &Tensor<F>) -> Tensor<F> {
    zip(x, grad, |v, g| if v > F::zero() { g } else { F::zero() })
}

pub fn tanh<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|v| v.tanh())
}

/// Gradient through `tanh` given its output `y`.
pub fn tanh_backward<F: Scalar>(y: &Tensor<F>, grad: &Tensor<F>) -> Tensor<F> {
    zip(y, grad, |v, g| g * (F::one() - v * v))
}

pub fn sigmoid<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|v| {
        if v >= F::zero() {
            F::one() / (F::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (F::one() + e)
        }
    })
}

/// Gradient through the logistic function given its output `p`.
pub fn sigmoid_backward<F: Scalar>(p: &Tensor<F>, grad: &Tensor<F>) -> Tensor<F> {
    zip(p, grad, |v, g| g * v * (F::one() - v))
}

/// Inverted dropout mask: entries are `0` or `1/(1-rate)`.
pub fn dropout_mask<F: Scalar, R: Rng>(shape: [usize; 4], rate: f64, rng: &mut R) -> Tensor<F> {
    let keep = F::from_f64(1.0 / (1.0 - rate));
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                F::zero()
            } else {
                keep
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("mask length matches shape")
}

pub fn mul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    zip(a, b, |x, y| x * y)
}

fn zip<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    assert_eq!(a.shape(), b.shape(), "element-wise shape mismatch");
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_vec(a.shape(), data).expect("same shape")
}
