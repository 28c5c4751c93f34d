use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::engine::Scalar;

/// A named learnable tensor together with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
    pub grad: Vec<F>,
}

impl<F: Scalar> Param<F> {
    pub fn constant(name: impl Into<String>, shape: Vec<usize>, v: f64) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            value: vec![F::from_f64(v); n],
            grad: vec![F::zero(); n],
        }
    }

    /// Gaussian initialization. Samples are drawn in f64 so that f32 and f64
    /// networks built from one seed agree up to rounding.
    pub fn normal<R: Rng>(
        name: impl Into<String>,
        shape: Vec<usize>,
        mean: f64,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let n = shape.iter().product();
        let dist = Normal::new(mean, std).expect("finite normal parameters");
        let value = (0..n).map(|_| F::from_f64(dist.sample(rng))).collect();
        Self {
            name: name.into(),
            shape,
            value,
            grad: vec![F::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = F::zero());
    }
}
