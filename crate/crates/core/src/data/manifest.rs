//! On-disk dataset layout:
//!
//! ```text
//! root/images/<id>.png       8-bit grayscale input
//! root/masks/<id>.png        8-bit RGB class-color mask
//! root/suppressed/<id>.png   8-bit grayscale bone-suppressed target
//! root/subjects.csv          optional, header `id,subject`
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{DynamicImage, GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::data::image::Image;
use crate::data::labels::{decode_mask, snap_mask, LabelMap};
use crate::error::{Error, Result};

pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";
pub const SUPPRESSED_DIR: &str = "suppressed";
pub const SUBJECTS_FILE: &str = "subjects.csv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub subject: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub suppressed: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    /// Sorted by id.
    pub entries: Vec<IndexEntry>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Distinct subjects, sorted.
    pub fn subjects(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.subject.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }
}

/// How a sample came to be.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Original,
    Augmented(crate::data::augment::Transform),
}

/// One aligned unit: input `x`, mask target `y1`, bone-suppressed target `y2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub id: String,
    pub subject: String,
    pub x: Image,
    pub y1: Image,
    pub y2: Image,
    pub origin: Origin,
}

impl PairedSample {
    pub fn size(&self) -> (usize, usize) {
        (self.x.height(), self.x.width())
    }

    pub fn is_original(&self) -> bool {
        self.origin == Origin::Original
    }

    /// Ground-truth label map decoded from `y1`.
    pub fn labels(&self) -> LabelMap {
        decode_mask(&self.y1.to_rgb8())
    }

    /// Checks the shared-size, value-range and anchor-color invariants.
    pub fn validate(&self) -> Result<()> {
        let size = self.size();
        if self.y1.height() != size.0
            || self.y1.width() != size.1
            || self.y2.height() != size.0
            || self.y2.width() != size.1
        {
            return Err(Error::shape(format!(
                "sample {} has mismatched image sizes",
                self.id
            )));
        }
        for img in [&self.x, &self.y1, &self.y2] {
            let (lo, hi) = img.min_max();
            if lo < -1.0 || hi > 1.0 {
                return Err(Error::Numeric(format!(
                    "sample {} has values outside [-1, 1]",
                    self.id
                )));
            }
        }
        let mask = self.y1.to_rgb8();
        if snap_mask(&mask) != mask {
            return Err(Error::config(format!(
                "sample {} has non-anchor mask colors",
                self.id
            )));
        }
        Ok(())
    }
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let listing = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in listing {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png || !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if out.insert(stem.to_string(), path.clone()).is_some() {
            return Err(Error::DuplicateId(stem.to_string()));
        }
    }
    Ok(out)
}

fn read_subjects(path: &Path) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        subject: String,
    }
    let mut map = BTreeMap::new();
    let mut reader = csv::Reader::from_path(path)?;
    for row in reader.deserialize() {
        let row: Row = row?;
        if map.insert(row.id.clone(), row.subject).is_some() {
            return Err(Error::DuplicateId(row.id));
        }
    }
    Ok(map)
}

/// Indexes a dataset directory. Ids come from `images/`; each needs a mask
/// and a suppressed counterpart with the same stem.
pub fn load_manifest(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    for dir in [IMAGES_DIR, MASKS_DIR, SUPPRESSED_DIR] {
        if !root.join(dir).is_dir() {
            return Err(Error::config(format!(
                "dataset root {} lacks a `{dir}/` directory",
                root.display()
            )));
        }
    }
    let images = png_stems(&root.join(IMAGES_DIR))?;
    let masks = png_stems(&root.join(MASKS_DIR))?;
    let suppressed = png_stems(&root.join(SUPPRESSED_DIR))?;
    let subjects_path = root.join(SUBJECTS_FILE);
    let subjects = if subjects_path.is_file() {
        read_subjects(&subjects_path)?
    } else {
        BTreeMap::new()
    };

    let mut entries = Vec::with_capacity(images.len());
    for (id, image) in images {
        let counterpart = |set: &BTreeMap<String, PathBuf>, dir: &str| {
            set.get(&id).cloned().ok_or_else(|| Error::MissingPair {
                id: id.clone(),
                path: root.join(dir).join(format!("{id}.png")),
            })
        };
        let mask = counterpart(&masks, MASKS_DIR)?;
        let suppressed = counterpart(&suppressed, SUPPRESSED_DIR)?;
        entries.push(IndexEntry {
            subject: subjects.get(&id).cloned().unwrap_or_else(|| id.clone()),
            id,
            image,
            mask,
            suppressed,
        });
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        entries,
    })
}

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn resize_gray(img: GrayImage, size: u32) -> GrayImage {
    if img.dimensions() == (size, size) {
        img
    } else {
        imageops::resize(&img, size, size, FilterType::Triangle)
    }
}

fn resize_mask(img: RgbImage, size: u32) -> RgbImage {
    if img.dimensions() == (size, size) {
        img
    } else {
        imageops::resize(&img, size, size, FilterType::Nearest)
    }
}

/// Loads one sample resized to `size x size` and normalized to `[-1, 1]`.
pub fn load_sample(index: &DatasetIndex, id: &str, size: usize) -> Result<PairedSample> {
    if size == 0 || size % 2 != 0 {
        return Err(Error::config(format!(
            "sample size must be even and positive, got {size}"
        )));
    }
    let entry = index
        .get(id)
        .ok_or_else(|| Error::config(format!("id `{id}` is not in the dataset index")))?;
    let size = size as u32;
    let x = resize_gray(open(&entry.image)?.to_luma8(), size);
    let mask = snap_mask(&resize_mask(open(&entry.mask)?.to_rgb8(), size));
    let y2 = resize_gray(open(&entry.suppressed)?.to_luma8(), size);
    Ok(PairedSample {
        id: entry.id.clone(),
        subject: entry.subject.clone(),
        x: Image::from_gray(&x),
        y1: Image::from_rgb(&mask),
        y2: Image::from_gray(&y2),
        origin: Origin::Original,
    })
}

/// Loads every indexed sample in id order.
pub fn load_all(index: &DatasetIndex, size: usize) -> Result<Vec<PairedSample>> {
    index.ids().map(|id| load_sample(index, id, size)).collect()
}

/// Writes samples back in the dataset layout, including `subjects.csv`.
pub fn write_dataset(root: impl AsRef<Path>, samples: &[PairedSample]) -> Result<DatasetIndex> {
    let root = root.as_ref();
    for dir in [IMAGES_DIR, MASKS_DIR, SUPPRESSED_DIR] {
        fs::create_dir_all(root.join(dir)).map_err(|e| Error::io(root.join(dir), e))?;
    }
    let save = |img: DynamicImage, path: PathBuf| -> Result<()> {
        img.save(&path).map_err(|e| Error::Decode {
            path,
            reason: e.to_string(),
        })
    };
    let mut writer = csv::Writer::from_path(root.join(SUBJECTS_FILE))?;
    writer.write_record(["id", "subject"])?;
    for s in samples {
        save(
            DynamicImage::ImageLuma8(s.x.to_gray8()),
            root.join(IMAGES_DIR).join(format!("{}.png", s.id)),
        )?;
        save(
            DynamicImage::ImageRgb8(s.y1.to_rgb8()),
            root.join(MASKS_DIR).join(format!("{}.png", s.id)),
        )?;
        save(
            DynamicImage::ImageLuma8(s.y2.to_gray8()),
            root.join(SUPPRESSED_DIR).join(format!("{}.png", s.id)),
        )?;
        writer.write_record([s.id.as_str(), s.subject.as_str()])?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(root.join(SUBJECTS_FILE), e))?;
    load_manifest(root)
}
