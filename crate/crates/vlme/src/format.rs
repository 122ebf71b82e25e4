//! The VET1 tensor file format.
//!
//! ```text
//! offset  size        field
//! 0       4           magic, ASCII "VET1"
//! 4       1           dtype code, 0x01 = f32 little-endian
//! 5       1           rank, 1..=4
//! 6       2           zero padding
//! 8       8 * rank    dims, u64 little-endian
//! ...     4 * prod    payload, row-major
//! ```
//!
//! A `[2, 2]` tensor therefore takes 8 + 16 + 16 = 40 bytes. Files must end
//! exactly at the end of the payload.

use std::fs;
use std::io;
use std::path::Path;

use vlme_core::Matrix;

pub const MAGIC: [u8; 4] = *b"VET1";
pub const DTYPE_F32: u8 = 0x01;
pub const MAX_RANK: usize = 4;
const HEADER_LEN: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic {found:02x?}, expected \"VET1\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported dtype code {0:#04x}, only 0x01 (f32) is supported")]
    UnsupportedDtype(u8),
    #[error("unsupported rank {0}, expected 1 to 4")]
    BadRank(usize),
    #[error("non-zero header padding {0:02x?}")]
    BadPadding([u8; 2]),
    #[error("truncated {what}: need {expected} bytes, file has {found}")]
    Truncated {
        what: &'static str,
        expected: u64,
        found: u64,
    },
    #[error("{0} unexpected bytes after the payload")]
    TrailingBytes(u64),
    #[error("dims {0:?} overflow the addressable size")]
    TooLarge(Vec<u64>),
    #[error("shape {shape:?} holds {expected} values, got {found}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("empty tensor with shape {0:?}")]
    Empty(Vec<usize>),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("expected rank {expected}, found shape {shape:?}")]
    RankMismatch { expected: usize, shape: Vec<usize> },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A decoded tensor: shape plus row-major f32 payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

fn check_shape(shape: &[usize], len: usize) -> Result<(), FormatError> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(FormatError::BadRank(shape.len()));
    }
    if shape.contains(&0) {
        return Err(FormatError::Empty(shape.to_vec()));
    }
    let expected = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::TooLarge(shape.iter().map(|&d| d as u64).collect()))?;
    if expected != len {
        return Err(FormatError::ShapeMismatch {
            shape: shape.to_vec(),
            expected,
            found: len,
        });
    }
    Ok(())
}

pub fn encode(shape: &[usize], data: &[f32]) -> Result<Vec<u8>, FormatError> {
    check_shape(shape, data.len())?;
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite(i));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * shape.len() + 4 * data.len());
    out.extend_from_slice(&MAGIC);
    out.push(DTYPE_F32);
    out.push(shape.len() as u8);
    out.extend_from_slice(&[0, 0]);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor, FormatError> {
    let have = bytes.len() as u64;
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            what: "header",
            expected: HEADER_LEN as u64,
            found: have,
        });
    }
    if bytes[4] != DTYPE_F32 {
        return Err(FormatError::UnsupportedDtype(bytes[4]));
    }
    let rank = bytes[5] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(FormatError::BadRank(rank));
    }
    if bytes[6..8] != [0, 0] {
        return Err(FormatError::BadPadding([bytes[6], bytes[7]]));
    }
    let dims_end = HEADER_LEN + 8 * rank;
    if bytes.len() < dims_end {
        return Err(FormatError::Truncated {
            what: "dims",
            expected: dims_end as u64,
            found: have,
        });
    }
    let dims: Vec<u64> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if dims.contains(&0) {
        return Err(FormatError::Empty(dims.iter().map(|&d| d as usize).collect()));
    }
    let payload = dims
        .iter()
        .try_fold(4u64, |acc, &d| acc.checked_mul(d))
        .and_then(|p| p.checked_add(dims_end as u64))
        .ok_or_else(|| FormatError::TooLarge(dims.clone()))?;
    if have < payload {
        return Err(FormatError::Truncated {
            what: "payload",
            expected: payload,
            found: have,
        });
    }
    if have > payload {
        return Err(FormatError::TrailingBytes(have - payload));
    }
    let shape: Vec<usize> = dims
        .iter()
        .map(|&d| usize::try_from(d).map_err(|_| FormatError::TooLarge(dims.clone())))
        .collect::<Result<_, _>>()?;
    let data: Vec<f32> = bytes[dims_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite(i));
    }
    Ok(Tensor { shape, data })
}

pub fn write_tensor(path: &Path, shape: &[usize], data: &[f32]) -> Result<(), FormatError> {
    let bytes = encode(shape, data)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor, FormatError> {
    decode(&fs::read(path)?)
}

/// Stores a matrix at f32 precision.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), FormatError> {
    write_tensor(path, &[m.rows(), m.cols()], &to_f32(m.data()))
}

/// Stores a vector at f32 precision.
pub fn write_vector(path: &Path, v: &[f64]) -> Result<(), FormatError> {
    write_tensor(path, &[v.len()], &to_f32(v))
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

impl Tensor {
    pub fn into_matrix(self) -> Result<Matrix, FormatError> {
        if self.shape.len() != 2 {
            return Err(FormatError::RankMismatch {
                expected: 2,
                shape: self.shape,
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        Ok(Matrix::new(r, c, self.data.into_iter().map(f64::from).collect()).expect("shape checked on decode"))
    }

    pub fn into_vector(self) -> Result<Vec<f64>, FormatError> {
        if self.shape.len() != 1 {
            return Err(FormatError::RankMismatch {
                expected: 1,
                shape: self.shape,
            });
        }
        Ok(self.data.into_iter().map(f64::from).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_layout() {
        let bytes = encode(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(bytes.len(), 40);
        assert_eq!(&bytes[..8], b"VET1\x01\x02\x00\x00");
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        let t = decode(&bytes).unwrap();
        assert_eq!(t.shape, vec![2, 2]);
        assert_eq!(t.data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn encode_rejects_bad_input() {
        assert!(matches!(encode(&[0], &[]), Err(FormatError::Empty(_))));
        assert!(matches!(encode(&[3, 2], &[0.0; 5]), Err(FormatError::ShapeMismatch { .. })));
        assert!(matches!(encode(&[], &[]), Err(FormatError::BadRank(0))));
        assert!(matches!(encode(&[1, 1, 1, 1, 1], &[0.0]), Err(FormatError::BadRank(5))));
        assert!(matches!(encode(&[2], &[1.0, f32::NAN]), Err(FormatError::NonFinite(1))));
    }
}
