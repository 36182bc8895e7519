//! LRRG binary dataset files.
//!
//! Little-endian layout:
//!
//! ```text
//! "LRRG"  u16 version=1  u8 regime  u8 split  u32 count
//! count × { u32 patient_id  u32 study_id  i64 acquired_at  u8 labels  256 × f32 pixels }
//! ```
//!
//! `regime` is the regime index (0 std, 1 mild, 2 severe) or `0xFF` for a
//! mixed set. In a mixed set the high nibble of `labels` carries each study's
//! own regime; otherwise it must be zero.

use std::path::{Path, PathBuf};

use lrrg_core::synth::{GrayImage, RegimeDataset, SyntheticStudy, IMAGE_PIXELS, IMAGE_SIDE};
use lrrg_core::{FindingMask, Regime, Split};

use crate::fsutil::atomic_write;

pub const MAGIC: &[u8; 4] = b"LRRG";
pub const VERSION: u16 = 1;
pub const MIXED_REGIME: u8 = 0xFF;
pub const HEADER_BYTES: usize = 12;
pub const STUDY_BYTES: usize = 4 + 4 + 8 + 1 + 4 * IMAGE_PIXELS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic at byte offset 0")]
    Magic,
    #[error("unsupported version {found} at byte offset 4")]
    Version { found: u16 },
    #[error("invalid {what} byte {value:#04x} at byte offset {offset}")]
    Header { what: &'static str, value: u8, offset: usize },
    #[error("file truncated in header at byte offset {offset}")]
    TruncatedHeader { offset: usize },
    #[error("file truncated in study {index} (byte offset {offset})")]
    TruncatedStudy { index: usize, offset: usize },
    #[error("study {index}: invalid {what} at byte offset {offset}")]
    Field { index: usize, what: &'static str, offset: usize },
    #[error("{extra} trailing bytes after the last study (byte offset {offset})")]
    Trailing { extra: usize, offset: usize },
    #[error("study {index} cannot be encoded: {what}")]
    Encode { index: usize, what: &'static str },
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
}

fn regime_byte(regime: Option<Regime>) -> u8 {
    regime.map_or(MIXED_REGIME, |r| r.index() as u8)
}

pub fn encode_dataset(dataset: &RegimeDataset) -> Result<Vec<u8>, FormatError> {
    let count = u32::try_from(dataset.studies.len()).map_err(|_| FormatError::Encode {
        index: u32::MAX as usize,
        what: "more than u32::MAX studies",
    })?;
    let mut out = Vec::with_capacity(HEADER_BYTES + dataset.studies.len() * STUDY_BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(regime_byte(dataset.regime));
    out.push(dataset.split.index() as u8);
    out.extend_from_slice(&count.to_le_bytes());
    for (index, s) in dataset.studies.iter().enumerate() {
        let image = &s.image;
        if image.width() != IMAGE_SIDE || image.height() != IMAGE_SIDE {
            return Err(FormatError::Encode {
                index,
                what: "image is not 16×16",
            });
        }
        let labels = match dataset.regime {
            None => s.labels.bits() | ((s.regime.index() as u8) << 4),
            Some(r) if r == s.regime => s.labels.bits(),
            Some(_) => {
                return Err(FormatError::Encode {
                    index,
                    what: "study regime differs from the dataset regime",
                })
            }
        };
        out.extend_from_slice(&s.patient_id.to_le_bytes());
        out.extend_from_slice(&s.study_id.to_le_bytes());
        out.extend_from_slice(&s.acquired_at.to_le_bytes());
        out.push(labels);
        for &p in image.pixels() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let chunk = self.bytes.get(self.pos..self.pos + N)?;
        self.pos += N;
        Some(chunk.try_into().expect("slice of length N"))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<RegimeDataset, FormatError> {
    let mut c = Cursor { bytes, pos: 0 };
    let header = |c: &Cursor<'_>| FormatError::TruncatedHeader { offset: c.pos };
    let magic: [u8; 4] = c.take().ok_or(FormatError::Magic)?;
    if &magic != MAGIC {
        return Err(FormatError::Magic);
    }
    let version = u16::from_le_bytes(c.take().ok_or_else(|| header(&c))?);
    if version != VERSION {
        return Err(FormatError::Version { found: version });
    }
    let [rb] = c.take().ok_or_else(|| header(&c))?;
    let regime = match rb {
        MIXED_REGIME => None,
        b => Some(Regime::from_index(b as usize).ok_or(FormatError::Header {
            what: "regime",
            value: b,
            offset: 6,
        })?),
    };
    let [sb] = c.take().ok_or_else(|| header(&c))?;
    let split = Split::from_index(sb as usize).ok_or(FormatError::Header {
        what: "split",
        value: sb,
        offset: 7,
    })?;
    let count = u32::from_le_bytes(c.take().ok_or_else(|| header(&c))?) as usize;

    let mut studies = Vec::with_capacity(count.min(bytes.len() / STUDY_BYTES + 1));
    for index in 0..count {
        let start = c.pos;
        let truncated = FormatError::TruncatedStudy { index, offset: start };
        if bytes.len() < start + STUDY_BYTES {
            return Err(truncated);
        }
        let patient_id = u32::from_le_bytes(c.take().ok_or(truncated.clone())?);
        let study_id = u32::from_le_bytes(c.take().ok_or(truncated.clone())?);
        let acquired_at = i64::from_le_bytes(c.take().ok_or(truncated.clone())?);
        let label_offset = c.pos;
        let [raw] = c.take().ok_or(truncated.clone())?;
        let bad_labels = FormatError::Field {
            index,
            what: "labels byte",
            offset: label_offset,
        };
        let study_regime = match regime {
            Some(r) if raw >> 4 == 0 => r,
            Some(_) => return Err(bad_labels),
            None => Regime::from_index((raw >> 4) as usize).ok_or(bad_labels.clone())?,
        };
        let labels = FindingMask::new(raw & 0x0F).ok_or(bad_labels)?;
        let mut pixels = Vec::with_capacity(IMAGE_PIXELS);
        for _ in 0..IMAGE_PIXELS {
            let offset = c.pos;
            let v = f32::from_le_bytes(c.take().ok_or(truncated.clone())?);
            if !(0.0..=1.0).contains(&v) {
                return Err(FormatError::Field {
                    index,
                    what: "pixel value",
                    offset,
                });
            }
            pixels.push(v);
        }
        studies.push(SyntheticStudy {
            patient_id,
            study_id,
            acquired_at,
            image: GrayImage::new(IMAGE_SIDE, IMAGE_SIDE, pixels).expect("256 pixels"),
            labels,
            regime: study_regime,
        });
    }
    if c.pos != bytes.len() {
        return Err(FormatError::Trailing {
            extra: bytes.len() - c.pos,
            offset: c.pos,
        });
    }
    Ok(RegimeDataset { regime, split, studies })
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &RegimeDataset) -> Result<(), DatasetFileError> {
    let path = path.as_ref();
    let bytes = encode_dataset(dataset).map_err(|source| DatasetFileError::Format {
        path: path.to_path_buf(),
        source,
    })?;
    atomic_write(path, &bytes).map_err(|source| DatasetFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<RegimeDataset, DatasetFileError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| DatasetFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_dataset(&bytes).map_err(|source| DatasetFileError::Format {
        path: path.to_path_buf(),
        source,
    })
}
