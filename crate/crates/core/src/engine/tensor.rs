use crate::engine::Scalar;
use crate::error::{Error, Result};

/// Dense NCHW tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: [usize; 4],
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: [usize; 4], value: F) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<F>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::shape(format!(
                "{} values cannot fill a {:?} tensor",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Number of elements in one batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    pub fn item(&self, b: usize) -> &[F] {
        let n = self.item_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [F] {
        let n = self.item_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn map(&self, mut f: impl FnMut(F) -> F) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| G::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        let [n, ca, h, w] = a.shape;
        let [nb, cb, hb, wb] = b.shape;
        if n != nb || h != hb || w != wb {
            return Err(Error::shape(format!(
                "cannot concatenate {:?} with {:?} along channels",
                a.shape, b.shape
            )));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(a.len() + b.len());
        for i in 0..n {
            data.extend_from_slice(&a.data[i * ca * plane..(i + 1) * ca * plane]);
            data.extend_from_slice(&b.data[i * cb * plane..(i + 1) * cb * plane]);
        }
        Ok(Self {
            shape: [n, ca + cb, h, w],
            data,
        })
    }

    /// Splits along the channel axis into `[0, first)` and `[first, C)`.
    pub fn split_channels(&self, first: usize) -> (Self, Self) {
        let [n, c, h, w] = self.shape;
        assert!(first <= c, "split point beyond channel count");
        let plane = h * w;
        let mut a = Vec::with_capacity(n * first * plane);
        let mut b = Vec::with_capacity(n * (c - first) * plane);
        for i in 0..n {
            let item = &self.data[i * c * plane..(i + 1) * c * plane];
            a.extend_from_slice(&item[..first * plane]);
            b.extend_from_slice(&item[first * plane..]);
        }
        (
            Self {
                shape: [n, first, h, w],
                data: a,
            },
            Self {
                shape: [n, c - first, h, w],
                data: b,
            },
        )
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_restores_operands() {
        let a = Tensor::from_vec([2, 1, 1, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec([2, 2, 1, 2], (10..18).map(|v| v as f32).collect()).unwrap();
        let ab = Tensor::concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), [2, 3, 1, 2]);
        assert_eq!(&ab.data()[..6], &[1.0, 2.0, 10.0, 11.0, 12.0, 13.0]);
        let (a2, b2) = ab.split_channels(1);
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(matches!(
            Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
    }
}
