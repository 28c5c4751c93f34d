//! Synthetic chest-like dataset for desk-scale runs.
//!
//! Each subject gets two dark lung ellipses, a brighter heart ellipse,
//! soft-tissue background and Gaussian noise. Periodic, slightly curved
//! "rib" stripes are added on top to form the input; the bone-suppressed
//! target is the same picture without them.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::image::{normalize, Image};
use crate::data::labels::{encode_labels, Class, LabelMap};
use crate::data::manifest::{write_dataset, DatasetIndex, Origin, PairedSample};
use crate::error::{Error, Result};

pub const MIN_TOY_SUBJECTS: usize = 4;
pub const MIN_TOY_SIZE: usize = 64;

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let u = (x - self.cx) / self.rx;
        let v = (y - self.cy) / self.ry;
        u * u + v * v <= 1.0
    }
}

/// Pixel-level ground truth of one synthetic subject.
pub struct ToySubject {
    pub labels: LabelMap,
    /// Input intensities (with ribs), 8-bit.
    pub input: Vec<u8>,
    /// Target intensities (without ribs), 8-bit.
    pub suppressed: Vec<u8>,
    /// Pixels covered by a rib stripe.
    pub stripes: Vec<bool>,
}

pub fn toy_subject(size: usize, rng: &mut ChaCha8Rng) -> ToySubject {
    let s = size as f64;
    let mut jitter = |scale: f64| rng.random_range(-scale..=scale);
    // The subject's left lung appears on the right of the image.
    let right_lung = Ellipse {
        cx: s * (0.30 + jitter(0.03)),
        cy: s * (0.45 + jitter(0.03)),
        rx: s * (0.14 + jitter(0.015)),
        ry: s * (0.28 + jitter(0.02)),
    };
    let left_lung = Ellipse {
        cx: s * (0.70 + jitter(0.03)),
        cy: s * (0.45 + jitter(0.03)),
        rx: s * (0.14 + jitter(0.015)),
        ry: s * (0.28 + jitter(0.02)),
    };
    let heart = Ellipse {
        cx: s * (0.54 + jitter(0.03)),
        cy: s * (0.66 + jitter(0.03)),
        rx: s * (0.16 + jitter(0.015)),
        ry: s * (0.12 + jitter(0.015)),
    };
    let tissue = 150.0 + jitter(10.0);
    let lung = 60.0 + jitter(10.0);
    let cardiac = 200.0 + jitter(10.0);
    let period = s * (0.14 + jitter(0.02));
    let thickness = period * 0.4;
    let phase = jitter(period);
    let curvature = 0.25 + jitter(0.1);
    let rib = 40.0 + jitter(8.0);
    let noise = Normal::new(0.0, 4.0).expect("valid noise");

    let n = size * size;
    let mut ids = vec![Class::Background.id(); n];
    let mut input = vec![0u8; n];
    let mut suppressed = vec![0u8; n];
    let mut stripes = vec![false; n];
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let i = y * size + x;
            let (class, base) = if heart.contains(fx, fy) {
                (Class::Heart, cardiac)
            } else if left_lung.contains(fx, fy) {
                (Class::LeftLung, lung)
            } else if right_lung.contains(fx, fy) {
                (Class::RightLung, lung)
            } else {
                (Class::Background, tissue)
            };
            ids[i] = class.id();
            let clean = (base + noise.sample(rng)).round().clamp(0.0, 255.0);
            let u = (fx - s / 2.0) / s;
            let bent = fy + curvature * s * u * u + phase;
            let on_rib = bent.rem_euclid(period) < thickness;
            stripes[i] = on_rib;
            suppressed[i] = clean as u8;
            input[i] = if on_rib {
                (clean + rib).min(255.0) as u8
            } else {
                clean as u8
            };
        }
    }
    ToySubject {
        labels: LabelMap::from_ids(size, size, ids).expect("ids are valid classes"),
        input,
        suppressed,
        stripes,
    }
}

fn gray(size: usize, values: &[u8]) -> Image {
    let plane: Vec<f32> = values.iter().map(|&v| normalize(v)).collect();
    let data = [plane.as_slice(); 3].concat();
    Image::from_planes(size, size, data).expect("plane sizes match")
}

/// In-memory synthetic samples, one image per subject.
pub fn toy_samples(n_subjects: usize, size: usize, seed: u64) -> Result<Vec<PairedSample>> {
    if n_subjects < MIN_TOY_SUBJECTS {
        return Err(Error::config(format!(
            "toy dataset needs at least {MIN_TOY_SUBJECTS} subjects, got {n_subjects}"
        )));
    }
    if size < MIN_TOY_SIZE || size % 2 != 0 {
        return Err(Error::config(format!(
            "toy dataset size must be even and at least {MIN_TOY_SIZE}, got {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_subjects)
        .map(|i| {
            let subject = toy_subject(size, &mut rng);
            PairedSample {
                id: format!("toy{i:03}"),
                subject: format!("subject{i:03}"),
                x: gray(size, &subject.input),
                y1: Image::from_rgb(&encode_labels(&subject.labels)),
                y2: gray(size, &subject.suppressed),
                origin: Origin::Original,
            }
        })
        .collect())
}

/// Writes a synthetic dataset in the standard layout under `out`.
pub fn make_toy_dataset(
    n_subjects: usize,
    size: usize,
    seed: u64,
    out: impl AsRef<Path>,
) -> Result<DatasetIndex> {
    write_dataset(out, &toy_samples(n_subjects, size, seed)?)
}
