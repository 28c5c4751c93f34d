//! Dataset ingestion, mask coding, augmentation and subject folds.

pub mod augment;
pub mod folds;
pub mod image;
pub mod labels;
pub mod manifest;

pub use augment::{augment_dataset, augment_sample, Transform};
pub use folds::{subject_kfold, FoldSplit};
pub use image::{denormalize, normalize, Image};
pub use labels::{decode_mask, encode_labels, Class, LabelMap};
pub use manifest::{
    load_all, load_manifest, load_sample, DatasetIndex, IndexEntry, Origin, PairedSample,
};
