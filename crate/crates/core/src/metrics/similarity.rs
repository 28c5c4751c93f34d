use image::GrayImage;

use crate::error::{Error, Result};

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;
/// Dynamic range of 8-bit intensities.
pub const DYNAMIC_RANGE: f64 = 255.0;
pub const SSIM_C1: f64 = (0.01 * DYNAMIC_RANGE) * (0.01 * DYNAMIC_RANGE);
pub const SSIM_C2: f64 = (0.03 * DYNAMIC_RANGE) * (0.03 * DYNAMIC_RANGE);

fn check_same(x: &GrayImage, y: &GrayImage) -> Result<()> {
    if x.dimensions() != y.dimensions() {
        return Err(Error::shape(format!(
            "images of size {:?} and {:?}",
            x.dimensions(),
            y.dimensions()
        )));
    }
    Ok(())
}

/// Root mean squared intensity difference on the 8-bit scale.
pub fn rmse(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    check_same(x, y)?;
    let n = x.as_raw().len();
    if n == 0 {
        return Err(Error::shape("empty images"));
    }
    let sum: f64 = x
        .as_raw()
        .iter()
        .zip(y.as_raw())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok((sum / n as f64).sqrt())
}

/// SSIM from plain window moments (population variance and covariance).
pub fn ssim_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cov: f64) -> f64 {
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// Summed-area table with a zero top row and left column.
fn integral(h: usize, w: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let stride = w + 1;
    let mut t = vec![0.0; (h + 1) * stride];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += f(y * w + x);
            t[(y + 1) * stride + x + 1] = t[y * stride + x + 1] + row;
        }
    }
    t
}

/// Mean SSIM over every 8x8 window at stride 1, unweighted.
pub fn mssim(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    check_same(x, y)?;
    let (w, h) = x.dimensions();
    let (w, h) = (w as usize, h as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::config(format!(
            "M-SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let (a, b) = (x.as_raw(), y.as_raw());
    let px = |i: usize| a[i] as f64;
    let py = |i: usize| b[i] as f64;
    let sx = integral(h, w, px);
    let sy = integral(h, w, py);
    let sxx = integral(h, w, |i| px(i) * px(i));
    let syy = integral(h, w, |i| py(i) * py(i));
    let sxy = integral(h, w, |i| px(i) * py(i));

    let stride = w + 1;
    let k = SSIM_WINDOW;
    let area = (k * k) as f64;
    let window = |t: &[f64], y0: usize, x0: usize| {
        t[(y0 + k) * stride + x0 + k] - t[y0 * stride + x0 + k] - t[(y0 + k) * stride + x0]
            + t[y0 * stride + x0]
    };
    let mut total = 0.0;
    for y0 in 0..=h - k {
        for x0 in 0..=w - k {
            let mx = window(&sx, y0, x0) / area;
            let my = window(&sy, y0, x0) / area;
            let vx = window(&sxx, y0, x0) / area - mx * mx;
            let vy = window(&syy, y0, x0) / area - my * my;
            let cov = window(&sxy, y0, x0) / area - mx * my;
            total += ssim_from_moments(mx, my, vx, vy, cov);
        }
    }
    Ok(total / ((h - k + 1) * (w - k + 1)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_hand_values() {
        let zero = GrayImage::from_raw(2, 2, vec![0, 0, 0, 0]).unwrap();
        let ramp = GrayImage::from_raw(2, 2, vec![1, 2, 3, 4]).unwrap();
        assert!((rmse(&zero, &ramp).unwrap() - 2.738_612_787_525_830_6).abs() < 1e-12);
        assert_eq!(rmse(&ramp, &ramp).unwrap(), 0.0);
        let shifted = GrayImage::from_raw(2, 2, vec![4, 5, 6, 7]).unwrap();
        assert!((rmse(&ramp, &shifted).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_images() {
        let a = GrayImage::from_pixel(10, 9, image::Luma([100]));
        assert!((mssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let black = GrayImage::from_pixel(8, 8, image::Luma([0]));
        let white = GrayImage::from_pixel(8, 8, image::Luma([255]));
        let expect = 9.999_000_099_990_003e-5;
        assert!((mssim(&black, &white).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn too_small_is_a_config_error() {
        let a = GrayImage::new(7, 12);
        assert!(matches!(mssim(&a, &a), Err(Error::Config(_))));
    }

    #[test]
    fn size_mismatch_is_a_shape_error() {
        assert!(matches!(
            rmse(&GrayImage::new(2, 2), &GrayImage::new(3, 2)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            mssim(&GrayImage::new(8, 8), &GrayImage::new(9, 8)),
            Err(Error::Shape(_))
        ));
    }
}
