//! Flat binary serialization of [`ParamVector`].
//!
//! ```text
//! u32 segment_count
//! per segment: u32 name_len  name (UTF-8)  u32 rank  rank × u64 extent  product(extents) × f64
//! ```
//!
//! All integers and floats are little-endian.

use std::path::{Path, PathBuf};

use lrrg_core::autodiff::{FlatVector, ParamVector, Tensor};
use lrrg_core::dualloop::Mlp;

use crate::fsutil::atomic_write;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParamFormatError {
    #[error("parameter file truncated at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("segment {index}: {what} at byte offset {offset}")]
    Segment { index: usize, what: String, offset: usize },
    #[error("{extra} trailing bytes at byte offset {offset}")]
    Trailing { extra: usize, offset: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum ParamFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: ParamFormatError },
}

pub fn encode_params(theta: &ParamVector) -> Vec<u8> {
    let layout = theta.layout();
    let mut out = Vec::with_capacity(16 + 8 * layout.total_dim());
    out.extend_from_slice(&(layout.segments().len() as u32).to_le_bytes());
    for (i, seg) in layout.segments().iter().enumerate() {
        out.extend_from_slice(&(seg.name.len() as u32).to_le_bytes());
        out.extend_from_slice(seg.name.as_bytes());
        out.extend_from_slice(&(seg.shape.len() as u32).to_le_bytes());
        for &e in &seg.shape {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in &theta.values()[layout.range(i)] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], ParamFormatError> {
    let chunk = bytes
        .get(*pos..pos.saturating_add(n))
        .ok_or(ParamFormatError::Truncated { offset: *pos })?;
    *pos += n;
    Ok(chunk)
}

fn u32_at(bytes: &[u8], pos: &mut usize) -> Result<u32, ParamFormatError> {
    Ok(u32::from_le_bytes(take(bytes, pos, 4)?.try_into().unwrap()))
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamVector, ParamFormatError> {
    let mut pos = 0;
    let count = u32_at(bytes, &mut pos)? as usize;
    let mut segments = Vec::new();
    for index in 0..count {
        let seg_err = |what: &str, offset| ParamFormatError::Segment {
            index,
            what: what.into(),
            offset,
        };
        let name_len = u32_at(bytes, &mut pos)? as usize;
        let name_at = pos;
        let name = std::str::from_utf8(take(bytes, &mut pos, name_len)?)
            .map_err(|_| seg_err("name is not UTF-8", name_at))?
            .to_string();
        let rank_at = pos;
        let rank = u32_at(bytes, &mut pos)? as usize;
        if rank > 2 {
            return Err(seg_err("rank exceeds 2", rank_at));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let extent_at = pos;
            let e = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().unwrap());
            shape.push(usize::try_from(e).map_err(|_| seg_err("extent overflows usize", extent_at))?);
        }
        let values_at = pos;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| seg_err("extents overflow", values_at))?;
        let raw = take(bytes, &mut pos, n.checked_mul(8).ok_or_else(|| seg_err("extents overflow", values_at))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| seg_err(&e.to_string(), values_at))?;
        segments.push((name, tensor));
    }
    if pos != bytes.len() {
        return Err(ParamFormatError::Trailing {
            extra: bytes.len() - pos,
            offset: pos,
        });
    }
    ParamVector::from_segments(segments).map_err(|e| ParamFormatError::Segment {
        index: 0,
        what: e.to_string(),
        offset: 0,
    })
}

pub fn write_params(path: impl AsRef<Path>, theta: &ParamVector) -> Result<(), ParamFileError> {
    let path = path.as_ref();
    atomic_write(path, &encode_params(theta)).map_err(|source| ParamFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_params(path: impl AsRef<Path>) -> Result<ParamVector, ParamFileError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ParamFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_params(&bytes).map_err(|source| ParamFileError::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// Recovers the classifier architecture from a parameter layout
/// (`w1,b1,w2,b2` or `w,b`).
pub fn mlp_for(theta: &ParamVector) -> Option<Mlp> {
    let segs = theta.layout().segments();
    let names: Vec<&str> = segs.iter().map(|s| s.name.as_str()).collect();
    let model = match (names.as_slice(), segs.first().map(|s| s.shape.as_slice())) {
        (["w1", "b1", "w2", "b2"], Some(&[input, hidden])) => {
            let outputs = *segs[2].shape.get(1)?;
            Mlp::new(input, Some(hidden), outputs)
        }
        (["w", "b"], Some(&[input, outputs])) => Mlp::new(input, None, outputs),
        _ => return None,
    };
    let expected = model.init(&mut lrrg_core::rng::seeded(0, 0));
    (expected.layout() == theta.layout()).then_some(model)
}
