//! Binary checkpoints: an 8-byte magic, a little-endian `u64` header length, a
//! JSON header describing the architecture, then the parameter count and the
//! parameters as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Frame, Generator, ImogArch, ImogNetwork, MlpArch, RatioNetwork};
use crate::error::{Result, SgmError};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"SGMCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointHeader {
    Imog { arch: ImogArch, frame: Frame, cond_frame: Option<Frame> },
    Ratio { arch: MlpArch, frame: Frame },
    Generator { arch: MlpArch, frame: Frame },
}

/// Any network that can be checkpointed.
pub enum AnyNetwork<T> {
    Imog(ImogNetwork<T>),
    Ratio(RatioNetwork<T>),
    Generator(Generator<T>),
}

impl<T: Scalar> AnyNetwork<T> {
    fn header_and_params(&self) -> (CheckpointHeader, &[T]) {
        match self {
            AnyNetwork::Imog(n) => (
                CheckpointHeader::Imog {
                    arch: n.arch().clone(),
                    frame: n.frame().clone(),
                    cond_frame: n.cond_frame().cloned(),
                },
                n.params(),
            ),
            AnyNetwork::Ratio(n) => {
                (CheckpointHeader::Ratio { arch: n.arch().clone(), frame: n.frame().clone() }, n.params())
            }
            AnyNetwork::Generator(n) => {
                (CheckpointHeader::Generator { arch: n.arch().clone(), frame: n.frame().clone() }, n.params())
            }
        }
    }
}

pub fn encode<T: Scalar>(net: &AnyNetwork<T>) -> Result<Vec<u8>> {
    let (header, params) = net.header_and_params();
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(24 + header.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.as_f64().to_le_bytes());
    }
    Ok(out)
}

pub fn decode<T: Scalar>(mut bytes: &[u8]) -> Result<AnyNetwork<T>> {
    let bad = |m: &str| SgmError::Format(format!("checkpoint: {m}"));
    let mut magic = [0u8; 8];
    bytes.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut len = [0u8; 8];
    bytes.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let hlen = u64::from_le_bytes(len) as usize;
    if bytes.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..hlen])?;
    bytes = &bytes[hlen..];
    bytes.read_exact(&mut len).map_err(|_| bad("truncated parameter count"))?;
    let n = u64::from_le_bytes(len) as usize;
    if bytes.len() != 8 * n {
        return Err(bad("parameter payload length mismatch"));
    }
    let params: Vec<T> =
        bytes.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk")))).collect();
    Ok(match header {
        CheckpointHeader::Imog { arch, frame, cond_frame } => {
            AnyNetwork::Imog(ImogNetwork::from_parts(arch, frame, cond_frame, params)?)
        }
        CheckpointHeader::Ratio { arch, frame } => AnyNetwork::Ratio(RatioNetwork::from_parts(arch, frame, params)?),
        CheckpointHeader::Generator { arch, frame } => {
            AnyNetwork::Generator(Generator::from_parts(arch, frame, params)?)
        }
    })
}

pub fn save<T: Scalar>(net: &AnyNetwork<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(net)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<AnyNetwork<T>> {
    decode(&std::fs::read(path)?)
}

/// True when the file starts with the checkpoint magic.
pub fn is_checkpoint(path: impl AsRef<Path>) -> bool {
    let mut magic = [0u8; 8];
    std::fs::File::open(path).and_then(|mut f| f.read_exact(&mut magic)).is_ok() && &magic == MAGIC
}
