use image::{GrayImage, RgbImage};

use crate::engine::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Maps an 8-bit intensity to `[-1, 1]` via `v / 127.5 - 1`.
#[inline]
pub fn normalize(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Exact inverse of [`normalize`] on 8-bit values; clamps anything else.
#[inline]
pub fn denormalize(x: f32) -> u8 {
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Three-channel planar image with values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; Self::CHANNELS * height * width],
        }
    }

    pub fn from_planes(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != Self::CHANNELS * height * width {
            return Err(Error::shape(format!(
                "{} values for a {height}x{width}x3 image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Replicates a grayscale image into three identical channels.
    pub fn from_gray(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let plane: Vec<f32> = img.as_raw().iter().map(|&v| normalize(v)).collect();
        let mut data = Vec::with_capacity(3 * plane.len());
        for _ in 0..Self::CHANNELS {
            data.extend_from_slice(&plane);
        }
        Self {
            height: h as usize,
            width: w as usize,
            data,
        }
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let n = (w * h) as usize;
        let mut data = vec![0.0; 3 * n];
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = normalize(px[c]);
            }
        }
        Self {
            height: h as usize,
            width: w as usize,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let n = self.height * self.width;
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let i = y as usize * self.width + x as usize;
            image::Rgb([0, 1, 2].map(|c| denormalize(self.data[c * n + i])))
        })
    }

    /// 8-bit grayscale view: the rounded mean of the three channels.
    pub fn to_gray8(&self) -> GrayImage {
        let n = self.height * self.width;
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let i = y as usize * self.width + x as usize;
            let sum: u32 = (0..3)
                .map(|c| denormalize(self.data[c * n + i]) as u32)
                .sum();
            image::Luma([((sum as f64) / 3.0).round() as u8])
        })
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Stacks images into an `[N, 3, H, W]` tensor.
pub fn stack<F: Scalar>(images: &[&Image]) -> Result<Tensor<F>> {
    let first = images
        .first()
        .ok_or_else(|| Error::shape("cannot stack zero images"))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if img.height != h || img.width != w {
            return Err(Error::shape("images in a batch must share their size"));
        }
        data.extend(img.data.iter().map(|&v| F::from_f64(v as f64)));
    }
    Tensor::from_vec([images.len(), 3, h, w], data)
}

/// Splits item `b` of an `[N, 3T, H, W]` tensor into `T` images.
pub fn unstack<F: Scalar>(t: &Tensor<F>, b: usize) -> Vec<Image> {
    let (h, w) = (t.height(), t.width());
    t.item(b)
        .chunks(3 * h * w)
        .map(|chunk| Image {
            height: h,
            width: w,
            data: chunk.iter().map(|v| v.as_f64() as f32).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_mapping() {
        assert_eq!(normalize(0), -1.0);
        assert_eq!(normalize(255), 1.0);
        assert!((normalize(128) - 0.003_921_568_6).abs() < 1e-7);
    }

    #[test]
    fn normalize_round_trip_is_exact_for_all_bytes() {
        for v in 0..=255u8 {
            assert_eq!(denormalize(normalize(v)), v);
        }
    }

    #[test]
    fn gray_replicates_into_three_channels() {
        let g = GrayImage::from_fn(4, 3, |x, y| image::Luma([(x * 10 + y) as u8]));
        let img = Image::from_gray(&g);
        assert_eq!(img.plane(0), img.plane(1));
        assert_eq!(img.plane(1), img.plane(2));
        assert_eq!(img.to_gray8(), g);
    }

    #[test]
    fn stack_unstack_round_trip() {
        let a = Image::filled(2, 2, 0.5);
        let b = Image::filled(2, 2, -0.25);
        let t: Tensor<f32> = stack(&[&a, &b]).unwrap();
        assert_eq!(t.shape(), [2, 3, 2, 2]);
        assert_eq!(unstack(&t, 1), vec![b]);
    }
}
