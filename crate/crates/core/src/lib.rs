//! Multitask image-to-images translation: one input image mapped to a
//! segmentation mask and a bone-suppressed image by a pix2pix generator
//! with optional dilated encoder layers, plus the training loop, metrics
//! and cross-validation harness around it.

pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod trainer;

pub use error::{Error, Result};
