//! Single-file checkpoint archive.
//!
//! ```text
//! magic "P2PMTCK1"
//! u32 section count
//! per section: u32 name length, name (UTF-8), u64 payload length, payload
//! 32-byte SHA-256 of everything above
//! ```
//!
//! Sections `descriptor`, `config`, `meta` and `optim` are JSON. Tensor
//! sections hold little-endian f32 values and are named `gen/<param>`,
//! `disc/<param>`, and `gen.m/`, `gen.v/`, `disc.m/`, `disc.v/` for the
//! Adam moments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::Param;
use crate::error::{Error, Result};
use crate::models::{ArchitectureDescriptor, Discriminator, Generator, SchemeConfig};
use crate::optim::Adam;
use crate::trainer::TrainConfig;

pub const MAGIC: &[u8; 8] = b"P2PMTCK1";
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub step: u64,
    /// Hash of the training and validation ids the weights were fit on.
    pub split_fingerprint: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub meta: CheckpointMeta,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub gen_opt: Adam<f32>,
    pub disc_opt: Adam<f32>,
}

#[derive(Serialize, Deserialize)]
struct OptimSteps {
    generator: u64,
    discriminator: u64,
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::Checksum(what.into())
}

impl Checkpoint {
    pub fn descriptor(&self) -> ArchitectureDescriptor {
        self.config.scheme.descriptor()
    }

    fn sections(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut out = vec![
            (
                "descriptor".to_string(),
                serde_json::to_vec_pretty(&self.descriptor())?,
            ),
            (
                "config".to_string(),
                serde_json::to_vec_pretty(&self.config)?,
            ),
            ("meta".to_string(), serde_json::to_vec_pretty(&self.meta)?),
            (
                "optim".to_string(),
                serde_json::to_vec(&OptimSteps {
                    generator: self.gen_opt.step,
                    discriminator: self.disc_opt.step,
                })?,
            ),
        ];
        let mut push = |prefix: &str, params: Vec<&Param<f32>>, opt: &Adam<f32>| {
            for (i, p) in params.iter().enumerate() {
                out.push((format!("{prefix}/{}", p.name), f32_bytes(&p.value)));
                out.push((format!("{prefix}.m/{}", p.name), f32_bytes(&opt.first[i])));
                out.push((format!("{prefix}.v/{}", p.name), f32_bytes(&opt.second[i])));
            }
        };
        push("gen", self.generator.params(), &self.gen_opt);
        push("disc", self.discriminator.params(), &self.disc_opt);
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let sections = self.sections()?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        for (name, payload) in &sections {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            buf.extend_from_slice(payload);
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(corrupt("file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("content hash mismatch"));
        }
        if &body[..MAGIC.len()] != MAGIC {
            return Err(corrupt("not a checkpoint archive"));
        }
        let sections = parse_sections(&body[MAGIC.len()..])?;
        let json = |name: &str| {
            sections
                .get(name)
                .ok_or_else(|| corrupt(format!("missing section `{name}`")))
        };
        let config: TrainConfig = serde_json::from_slice(json("config")?)?;
        let descriptor: ArchitectureDescriptor = serde_json::from_slice(json("descriptor")?)?;
        if descriptor != config.scheme.descriptor() {
            return Err(Error::config(
                "stored architecture does not match the stored configuration",
            ));
        }
        let meta: CheckpointMeta = serde_json::from_slice(json("meta")?)?;
        let steps: OptimSteps = serde_json::from_slice(json("optim")?)?;

        let mut generator = Generator::<f32>::new(config.scheme, 0)?;
        let mut discriminator = Discriminator::<f32>::new(config.scheme, 0)?;
        let gen_opt = restore(
            &sections,
            "gen",
            generator.params_mut(),
            &config,
            steps.generator,
        )?;
        let disc_opt = restore(
            &sections,
            "disc",
            discriminator.params_mut(),
            &config,
            steps.discriminator,
        )?;
        Ok(Self {
            config,
            meta,
            generator,
            discriminator,
            gen_opt,
            disc_opt,
        })
    }
}

fn parse_sections(mut rest: &[u8]) -> Result<BTreeMap<String, &[u8]>> {
    fn take<'a>(rest: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
        if rest.len() < n {
            return Err(corrupt("truncated section"));
        }
        let (head, tail) = rest.split_at(n);
        *rest = tail;
        Ok(head)
    }
    let count = u32::from_le_bytes(take(&mut rest, 4)?.try_into().expect("4 bytes"));
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut rest, 4)?.try_into().expect("4 bytes"));
        let name = std::str::from_utf8(take(&mut rest, name_len as usize)?)
            .map_err(|_| corrupt("section name is not UTF-8"))?
            .to_string();
        let len = u64::from_le_bytes(take(&mut rest, 8)?.try_into().expect("8 bytes"));
        let payload = take(
            &mut rest,
            usize::try_from(len).map_err(|_| corrupt("section too large"))?,
        )?;
        if out.insert(name.clone(), payload).is_some() {
            return Err(corrupt(format!("duplicate section `{name}`")));
        }
    }
    if !rest.is_empty() {
        return Err(corrupt("trailing bytes after the last section"));
    }
    Ok(out)
}

fn read_f32(sections: &BTreeMap<String, &[u8]>, name: &str, len: usize) -> Result<Vec<f32>> {
    let bytes = sections
        .get(name)
        .ok_or_else(|| Error::config(format!("checkpoint lacks tensor `{name}`")))?;
    if bytes.len() != 4 * len {
        return Err(Error::config(format!(
            "tensor `{name}` holds {} bytes, expected {}",
            bytes.len(),
            4 * len
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

fn restore(
    sections: &BTreeMap<String, &[u8]>,
    prefix: &str,
    params: Vec<&mut Param<f32>>,
    config: &TrainConfig,
    step: u64,
) -> Result<Adam<f32>> {
    let mut first = Vec::with_capacity(params.len());
    let mut second = Vec::with_capacity(params.len());
    for p in params {
        let n = p.len();
        p.value = read_f32(sections, &format!("{prefix}/{}", p.name), n)?;
        first.push(read_f32(sections, &format!("{prefix}.m/{}", p.name), n)?);
        second.push(read_f32(sections, &format!("{prefix}.v/{}", p.name), n)?);
    }
    Ok(Adam {
        config: config.adam(),
        step,
        first,
        second,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = ckpt.to_bytes()?;
    // Write then rename so readers never observe a half-written archive.
    let tmp = path.with_extension("ckpt.partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// Loads a checkpoint and refuses it unless its architecture equals the
/// one `expected` describes.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &SchemeConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.config.scheme != *expected {
        return Err(Error::config(format!(
            "checkpoint holds {} at {} px (base width {}), requested {} at {} px (base width {})",
            ckpt.config.scheme.scheme,
            ckpt.config.scheme.image_size,
            ckpt.config.scheme.base_width,
            expected.scheme,
            expected.image_size,
            expected.base_width
        )));
    }
    Ok(ckpt)
}
