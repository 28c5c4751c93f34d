//! Class-color mask encoding.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Segmentation classes. Declaration order is the tie-break priority of
/// [`decode_mask`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Class {
    Background = 0,
    LeftLung = 1,
    RightLung = 2,
    Heart = 3,
}

impl Class {
    pub const ALL: [Class; 4] = [
        Class::Background,
        Class::LeftLung,
        Class::RightLung,
        Class::Heart,
    ];
    /// The scored anatomical structures.
    pub const ORGANS: [Class; 3] = [Class::LeftLung, Class::RightLung, Class::Heart];

    pub fn from_id(id: u8) -> Option<Class> {
        Class::ALL.get(id as usize).copied()
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn color(self) -> [u8; 3] {
        match self {
            Class::Background => [0, 0, 0],
            Class::LeftLung => [0, 0, 255],
            Class::RightLung => [0, 255, 0],
            Class::Heart => [255, 0, 0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Background => "background",
            Class::LeftLung => "left-lung",
            Class::RightLung => "right-lung",
            Class::Heart => "heart",
        }
    }
}

/// Grid of class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn filled(height: usize, width: usize, class: Class) -> Self {
        Self {
            height,
            width,
            data: vec![class.id(); height * width],
        }
    }

    pub fn from_ids(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "{} labels for a {height}x{width} map",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| Class::from_id(v).is_none()) {
            return Err(Error::config(format!("invalid class id {bad}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ids(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> Class {
        Class::from_id(self.data[y * self.width + x]).expect("valid by construction")
    }

    pub fn set(&mut self, y: usize, x: usize, class: Class) {
        self.data[y * self.width + x] = class.id();
    }

    pub fn count(&self, class: Class) -> usize {
        self.data.iter().filter(|&&v| v == class.id()).count()
    }
}

/// Paints every class with its anchor color.
pub fn encode_labels(labels: &LabelMap) -> RgbImage {
    RgbImage::from_fn(labels.width as u32, labels.height as u32, |x, y| {
        Rgb(labels.get(y as usize, x as usize).color())
    })
}

/// Nearest anchor color (Euclidean RGB) per pixel. Exact ties resolve to the
/// earlier class in [`Class::ALL`].
pub fn decode_mask(image: &RgbImage) -> LabelMap {
    let (w, h) = image.dimensions();
    let data = image.pixels().map(|px| nearest_class(px.0).id()).collect();
    LabelMap {
        height: h as usize,
        width: w as usize,
        data,
    }
}

pub fn nearest_class(rgb: [u8; 3]) -> Class {
    let dist = |c: Class| -> u32 {
        rgb.iter()
            .zip(c.color())
            .map(|(&a, b)| {
                let d = a as i32 - b as i32;
                (d * d) as u32
            })
            .sum()
    };
    let mut best = Class::Background;
    let mut best_d = dist(best);
    for c in &Class::ALL[1..] {
        let d = dist(*c);
        if d < best_d {
            best = *c;
            best_d = d;
        }
    }
    best
}

/// Replaces every pixel by its nearest anchor color.
pub fn snap_mask(image: &RgbImage) -> RgbImage {
    encode_labels(&decode_mask(image))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_background_is_black() {
        let img = encode_labels(&LabelMap::filled(3, 4, Class::Background));
        assert!(img.pixels().all(|p| p.0 == [0, 0, 0]));
    }

    #[test]
    fn single_heart_pixel_is_red() {
        let mut m = LabelMap::filled(3, 3, Class::Background);
        m.set(1, 2, Class::Heart);
        let img = encode_labels(&m);
        assert_eq!(img.get_pixel(2, 1).0, [255, 0, 0]);
        assert_eq!(img.get_pixel(0, 0).0, [0, 0, 0]);
    }

    #[test]
    fn checkerboard_lungs() {
        let ids = (0..16)
            .map(|i| if (i / 4 + i % 4) % 2 == 0 { 1 } else { 2 })
            .collect();
        let m = LabelMap::from_ids(4, 4, ids).unwrap();
        let img = encode_labels(&m);
        for (x, y, p) in img.enumerate_pixels() {
            let expect = if (x + y) % 2 == 0 {
                [0, 0, 255]
            } else {
                [0, 255, 0]
            };
            assert_eq!(p.0, expect);
        }
        assert_eq!(decode_mask(&img), m);
    }

    #[test]
    fn nearest_anchor_examples() {
        assert_eq!(nearest_class([200, 30, 30]), Class::Heart);
        // 3*127^2 = 48387 to black vs 128^2 + 2*127^2 = 48642 to each color
        assert_eq!(nearest_class([127, 127, 127]), Class::Background);
        // (0,128,128) is 128^2+128^2 from black, 127^2+128^2 from both lungs:
        // both lungs tie, left lung has priority.
        assert_eq!(nearest_class([0, 128, 128]), Class::LeftLung);
    }

    #[test]
    fn matches_brute_force_distance_table() {
        // Black can never tie with a colored anchor on integer inputs (that
        // needs a 127.5 component), so ties only occur among colors.
        for r in (0..=255u16).step_by(17) {
            for g in (0..=255u16).step_by(17) {
                for b in (0..=255u16).step_by(17) {
                    let c = [r as u8, g as u8, b as u8];
                    let table: Vec<i32> = Class::ALL
                        .iter()
                        .map(|k| {
                            c.iter()
                                .zip(k.color())
                                .map(|(&x, y)| (x as i32 - y as i32).pow(2))
                                .sum()
                        })
                        .collect();
                    let min = *table.iter().min().unwrap();
                    let first = table.iter().position(|&d| d == min).unwrap();
                    assert_eq!(nearest_class(c), Class::ALL[first]);
                }
            }
        }
    }

    #[test]
    fn invalid_ids_rejected() {
        assert!(LabelMap::from_ids(1, 2, vec![0, 4]).is_err());
        assert!(LabelMap::from_ids(1, 2, vec![0]).is_err());
    }
}
