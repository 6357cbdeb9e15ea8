//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 4 | magic `FFGT` |
//! | 4 | 4 | format version (`u32`, currently 1) |
//! | 8 | 4 | descriptor length `d` (`u32`) |
//! | 12 | d | architecture descriptor, compact JSON |
//! | … | … | per parameterized layer in declaration order: weights as `f32`, then biases as `f32` |
//! | … | … | per parameterized layer: channel mask bits, then trainable mask bits; each padded to whole bytes, LSB-first |
//! | end−32 | 32 | SHA-256 of every preceding byte |
//!
//! The *body* is everything before the checksum trailer. Two checkpoints of
//! the same architecture share body offsets, so a byte-level diff of bodies
//! can be attributed to channels with [`ChannelByteMap`].

use std::fs;
use std::ops::Range;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::Result;
use crate::nn::{Architecture, ChannelId, Model};

pub const MAGIC: &[u8; 4] = b"FFGT";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated at byte {0}")]
    Truncated(usize),
    #[error("invalid architecture descriptor: {0}")]
    Descriptor(String),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
}

fn descriptor(model: &Model) -> Vec<u8> {
    serde_json::to_vec(model.architecture()).expect("architecture serializes")
}

fn push_bits(out: &mut Vec<u8>, bits: &[bool]) {
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &b) in chunk.iter().enumerate() {
            if b {
                byte |= 1 << i;
            }
        }
        out.push(byte);
    }
}

/// Serialized checkpoint without the checksum trailer.
pub fn encode_body(model: &Model) -> Vec<u8> {
    let desc = descriptor(model);
    let mut out = Vec::with_capacity(16 + desc.len() + model.parameter_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(&desc);
    for l in model.parameterized_layers() {
        let layer = &model.layers()[l];
        for v in layer.weights().data().iter().chain(layer.bias().data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for l in model.parameterized_layers() {
        push_bits(&mut out, model.channel_mask(l));
        push_bits(&mut out, model.trainable_mask(l));
    }
    out
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut out = encode_body(model);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated(self.pos))?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let b = self.take(n * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn bits(&mut self, n: usize) -> Result<Vec<bool>, CheckpointError> {
        let b = self.take(n.div_ceil(8))?;
        Ok((0..n).map(|i| b[i / 8] & (1 << (i % 8)) != 0).collect())
    }
}

/// Decodes and verifies a checkpoint. No model is returned unless every
/// check passes.
pub fn decode(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    if bytes.len() < 12 + CHECKSUM_LEN {
        return Err(CheckpointError::Truncated(bytes.len()).into());
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version).into());
    }
    let (body, trailer) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(CheckpointError::ChecksumMismatch.into());
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let desc_len = r.u32()? as usize;
    let arch: Architecture = serde_json::from_slice(r.take(desc_len)?)
        .map_err(|e| CheckpointError::Descriptor(e.to_string()))?;
    let skeleton = Model::zeros(arch.clone())
        .map_err(|e| CheckpointError::Descriptor(e.to_string()))?;

    let n = skeleton.layers().len();
    let mut params = vec![(Vec::new(), Vec::new()); n];
    for l in skeleton.parameterized_layers() {
        let layer = &skeleton.layers()[l];
        let w = r.f32s(layer.weights().len())?;
        let b = r.f32s(layer.bias().len())?;
        params[l] = (w, b);
    }
    let mut channel_mask = vec![Vec::new(); n];
    let mut trainable_mask = vec![Vec::new(); n];
    for l in skeleton.parameterized_layers() {
        let count = skeleton.channel_count(l);
        channel_mask[l] = r.bits(count)?;
        trainable_mask[l] = r.bits(count)?;
    }
    if r.pos != body.len() {
        return Err(CheckpointError::TrailingBytes(body.len() - r.pos).into());
    }
    Model::from_parts(arch, params, channel_mask, trainable_mask)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    decode(&fs::read(path)?)
}

/// Byte ranges within the checkpoint body owned by each channel's parameters.
///
/// Mask bits are not attributed to any channel: a conserved region must keep
/// its masks too.
#[derive(Debug, Clone)]
pub struct ChannelByteMap {
    ranges: Vec<(ChannelId, Range<usize>)>,
}

impl ChannelByteMap {
    pub fn new(model: &Model) -> Self {
        let mut pos = 12 + descriptor(model).len();
        let mut ranges = Vec::new();
        for l in model.parameterized_layers() {
            let layer = &model.layers()[l];
            let count = layer.out_channel_count();
            let fan_in = layer.spec().fan_in();
            let weights_start = pos;
            let bias_start = pos + layer.weights().len() * 4;
            for c in 0..count {
                let ch = ChannelId::new(l, c);
                let w0 = weights_start + c * fan_in * 4;
                ranges.push((ch, w0..w0 + fan_in * 4));
                let b0 = bias_start + c * 4;
                ranges.push((ch, b0..b0 + 4));
            }
            pos = bias_start + count * 4;
        }
        Self { ranges }
    }

    pub fn owner(&self, offset: usize) -> Option<ChannelId> {
        self.ranges
            .iter()
            .find(|(_, r)| r.contains(&offset))
            .map(|(ch, _)| *ch)
    }

    pub fn ranges(&self, ch: ChannelId) -> Vec<Range<usize>> {
        self.ranges
            .iter()
            .filter(|(c, _)| *c == ch)
            .map(|(_, r)| r.clone())
            .collect()
    }
}

/// Offsets at which two equally long byte images differ.
pub fn differing_offsets(a: &[u8], b: &[u8]) -> Vec<usize> {
    let mut out: Vec<usize> = a
        .iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect();
    if a.len() != b.len() {
        out.extend(a.len().min(b.len())..a.len().max(b.len()));
    }
    out
}

/// Body offsets where `a` and `b` differ that are not owned by `allowed`.
pub fn diff_outside(a: &Model, b: &Model, allowed: &[ChannelId]) -> Vec<usize> {
    let map = ChannelByteMap::new(a);
    differing_offsets(&encode_body(a), &encode_body(b))
        .into_iter()
        .filter(|&off| map.owner(off).is_none_or(|ch| !allowed.contains(&ch)))
        .collect()
}
