//! Fixed five-way geometric augmentation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::image::Image;
use crate::data::labels::snap_mask;
use crate::data::manifest::{Origin, PairedSample};
use crate::error::{Error, Result};

/// Value written into regions a transform exposes: black for every image,
/// which is also the background anchor of the mask.
pub const FILL: f32 = -1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Identity,
    /// Counterclockwise as displayed, about the image center.
    Rotate10,
    RotateMinus5,
    /// Content moves 30 px right and 10 px down.
    Shift30x10,
    Shift20x10Back,
}

impl Transform {
    pub const ALL: [Transform; 5] = [
        Transform::Identity,
        Transform::Rotate10,
        Transform::RotateMinus5,
        Transform::Shift30x10,
        Transform::Shift20x10Back,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Rotate10 => "rot+10",
            Transform::RotateMinus5 => "rot-5",
            Transform::Shift30x10 => "shift+30+10",
            Transform::Shift20x10Back => "shift-20-10",
        }
    }

    /// Rotation in degrees, if any.
    pub fn degrees(self) -> Option<f64> {
        match self {
            Transform::Rotate10 => Some(10.0),
            Transform::RotateMinus5 => Some(-5.0),
            _ => None,
        }
    }

    /// Translation `(dx, dy)` in pixels, if any.
    pub fn shift(self) -> Option<(i64, i64)> {
        match self {
            Transform::Shift30x10 => Some((30, 10)),
            Transform::Shift20x10Back => Some((-20, -10)),
            _ => None,
        }
    }

    /// Applies the transform to one image. `mask` selects nearest-neighbor
    /// sampling; otherwise rotations are bilinear.
    pub fn apply(self, img: &Image, mask: bool) -> Image {
        if let Some(deg) = self.degrees() {
            rotate(img, deg, mask)
        } else if let Some((dx, dy)) = self.shift() {
            translate(img, dx, dy)
        } else {
            img.clone()
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Transform::ALL
            .into_iter()
            .find(|t| t.id() == s)
            .ok_or_else(|| Error::config(format!("unknown transform `{s}`")))
    }
}

/// `out(x, y) = src(x - dx, y - dy)`.
pub fn translate(img: &Image, dx: i64, dy: i64) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut out = Image::filled(h, w, FILL);
    for c in 0..Image::CHANNELS {
        for y in 0..h {
            let sy = y as i64 - dy;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for x in 0..w {
                let sx = x as i64 - dx;
                if sx >= 0 && sx < w as i64 {
                    out.set(c, y, x, img.get(c, sy as usize, sx as usize));
                }
            }
        }
    }
    out
}

/// Rotates about the center by `degrees`, counterclockwise as displayed
/// (rows grow downward). Output pixels pull from the inverse-rotated
/// source location.
pub fn rotate(img: &Image, degrees: f64, nearest: bool) -> Image {
    let (h, w) = (img.height(), img.width());
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut out = Image::filled(h, w, FILL);
    let fetch = |c: usize, y: i64, x: i64| -> f32 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            FILL
        } else {
            img.get(c, y as usize, x as usize)
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 - cx, y as f64 - cy);
            let sx = cos * u - sin * v + cx;
            let sy = sin * u + cos * v + cy;
            for c in 0..Image::CHANNELS {
                let value = if nearest {
                    fetch(c, sy.round() as i64, sx.round() as i64)
                } else {
                    let (x0, y0) = (sx.floor(), sy.floor());
                    let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
                    let (x0, y0) = (x0 as i64, y0 as i64);
                    let top = fetch(c, y0, x0) * (1.0 - fx) + fetch(c, y0, x0 + 1) * fx;
                    let bottom = fetch(c, y0 + 1, x0) * (1.0 - fx) + fetch(c, y0 + 1, x0 + 1) * fx;
                    top * (1.0 - fy) + bottom * fy
                };
                out.set(c, y, x, value);
            }
        }
    }
    out
}

/// Derives one augmented member from an original sample.
pub fn augment_sample(sample: &PairedSample, t: Transform) -> PairedSample {
    if t == Transform::Identity {
        return sample.clone();
    }
    let y1 = t.apply(&sample.y1, true);
    PairedSample {
        id: format!("{}__{}", sample.id, t.id()),
        subject: sample.subject.clone(),
        x: t.apply(&sample.x, false),
        y1: Image::from_rgb(&snap_mask(&y1.to_rgb8())),
        y2: t.apply(&sample.y2, false),
        origin: Origin::Augmented(t),
    }
}

/// Expands originals five-fold, ordered by source id then transform.
pub fn augment_dataset(samples: &[PairedSample]) -> Result<Vec<PairedSample>> {
    if let Some(s) = samples.iter().find(|s| !s.is_original()) {
        return Err(Error::config(format!(
            "sample {} is already augmented",
            s.id
        )));
    }
    let mut sources: Vec<&PairedSample> = samples.iter().collect();
    sources.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(sources
        .into_iter()
        .flat_map(|s| {
            Transform::ALL
                .into_iter()
                .map(move |t| augment_sample(s, t))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        let mut img = Image::filled(h, w, 0.0);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    img.set(
                        c,
                        y,
                        x,
                        ((y * w + x) as f32 / (h * w) as f32) - 0.5 + c as f32 * 0.1,
                    );
                }
            }
        }
        img
    }

    #[test]
    fn shift_moves_origin_and_fills_vacated_columns() {
        let img = ramp(40, 64);
        let out = translate(&img, 30, 10);
        assert_eq!(out.get(0, 10, 30), img.get(0, 0, 0));
        assert_eq!(out.get(2, 39, 63), img.get(2, 29, 33));
        for y in 0..40 {
            for x in 0..30 {
                assert_eq!(out.get(1, y, x), FILL);
            }
        }
        for x in 0..64 {
            assert_eq!(out.get(0, 5, x), FILL);
        }
    }

    #[test]
    fn negative_shift_fills_bottom_right() {
        let img = ramp(32, 32);
        let out = translate(&img, -20, -10);
        assert_eq!(out.get(0, 0, 0), img.get(0, 10, 20));
        assert_eq!(out.get(0, 31, 31), FILL);
        assert_eq!(out.get(0, 21, 11), img.get(0, 31, 31));
        assert_eq!(out.get(0, 21, 12), FILL);
        assert_eq!(out.get(0, 22, 0), FILL);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = ramp(9, 7);
        assert_eq!(rotate(&img, 0.0, false), img);
        assert_eq!(rotate(&img, 0.0, true), img);
    }

    #[test]
    fn quarter_turn_is_counterclockwise() {
        // On a square grid a 90 degree turn is an exact permutation: the
        // right-hand column becomes the top row.
        let img = ramp(5, 5);
        let out = rotate(&img, 90.0, true);
        for i in 0..5 {
            assert_eq!(out.get(0, 0, i), img.get(0, i, 4));
        }
    }

    #[test]
    fn rotation_keeps_center() {
        let img = ramp(9, 9);
        let out = rotate(&img, 10.0, false);
        assert!((out.get(0, 4, 4) - img.get(0, 4, 4)).abs() < 1e-6);
    }

    #[test]
    fn transform_ids_round_trip() {
        for t in Transform::ALL {
            assert_eq!(t.id().parse::<Transform>().unwrap(), t);
        }
        assert!("rot+3".parse::<Transform>().is_err());
    }
}
