//! Exchange message format (`P2XG`).
//!
//! Header, little-endian: magic `P2XG` (4), version u16, domain code u8,
//! matrix code u8, rows u32, cols u32, lambda f32 (20 bytes), followed by
//! rows*cols f32 payload in row-major order.
//!
//! Encoding starts from an [`ObfuscatedBundle`](super::ObfuscatedBundle)
//! only; that is the type-level privacy boundary.

use super::ObfuscatedBundle;
use crate::data::DomainTag;
use crate::error::{CoreError, Result};
use crate::tensor::Tensor2;

pub const EXCHANGE_MAGIC: &[u8; 4] = b"P2XG";
pub const EXCHANGE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

/// Which of the four obfuscated matrices a message carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Common,
    Specific,
    CommonAug,
    SpecificAug,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 4] = [
        MatrixKind::Common,
        MatrixKind::Specific,
        MatrixKind::CommonAug,
        MatrixKind::SpecificAug,
    ];

    pub fn code(self) -> u8 {
        match self {
            MatrixKind::Common => 0,
            MatrixKind::Specific => 1,
            MatrixKind::CommonAug => 2,
            MatrixKind::SpecificAug => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(MatrixKind::Common),
            1 => Ok(MatrixKind::Specific),
            2 => Ok(MatrixKind::CommonAug),
            3 => Ok(MatrixKind::SpecificAug),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown matrix code {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MessageHeader {
    pub version: u16,
    pub domain: DomainTag,
    pub kind: MatrixKind,
    pub rows: u32,
    pub cols: u32,
    pub lambda: f32,
}

/// Serialize one matrix of an obfuscated bundle.
pub fn encode_message(bundle: &ObfuscatedBundle, kind: MatrixKind) -> Vec<u8> {
    let matrix = bundle.matrix(kind);
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.data().len() * 4);
    out.extend_from_slice(EXCHANGE_MAGIC);
    out.extend_from_slice(&EXCHANGE_VERSION.to_le_bytes());
    out.push(bundle.domain.code());
    out.push(kind.code());
    out.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    out.extend_from_slice(&(bundle.lambda_used.unwrap_or(0.0) as f32).to_le_bytes());
    for &v in matrix.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Parse just the header; used by framed socket reads.
pub fn decode_header(bytes: &[u8]) -> Result<MessageHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(CoreError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != EXCHANGE_MAGIC {
        return Err(CoreError::BadMagic);
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != EXCHANGE_VERSION {
        return Err(CoreError::VersionMismatch {
            got: version,
            expected: EXCHANGE_VERSION,
        });
    }
    let domain = match bytes[6] {
        0 => DomainTag::A,
        1 => DomainTag::B,
        other => {
            return Err(CoreError::InvalidArgument(format!(
                "unknown domain code {other}"
            )))
        }
    };
    let kind = MatrixKind::from_code(bytes[7])?;
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let lambda = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    Ok(MessageHeader {
        version,
        domain,
        kind,
        rows,
        cols,
        lambda,
    })
}

/// Decode a full message; validates magic, version, and payload length.
pub fn decode_message(bytes: &[u8]) -> Result<(MessageHeader, Tensor2)> {
    let header = decode_header(bytes)?;
    let expected = HEADER_LEN + header.rows as usize * header.cols as usize * 4;
    if bytes.len() != expected {
        return Err(CoreError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let matrix = Tensor2::from_vec(header.rows as usize, header.cols as usize, data)?;
    Ok((header, matrix))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f32_matrix(rows: usize, cols: usize, seed: u64) -> Tensor2 {
        let mut rng = crate::rng::stream(seed, &["wire-test"]);
        let raw = Tensor2::random_uniform(rows, cols, -2.0, 2.0, &mut rng);
        raw.map(|v| v as f32 as f64)
    }

    fn bundle(rows: usize, cols: usize, seed: u64) -> ObfuscatedBundle {
        ObfuscatedBundle {
            domain: DomainTag::B,
            specific: f32_matrix(rows, cols, seed),
            common: f32_matrix(rows, cols, seed + 1),
            specific_aug: f32_matrix(rows, cols, seed + 2),
            common_aug: f32_matrix(rows, cols, seed + 3),
            lambda_used: Some(0.25),
        }
    }

    #[test]
    fn two_by_two_message_is_36_bytes() {
        let b = bundle(2, 2, 7);
        let msg = encode_message(&b, MatrixKind::Common);
        assert_eq!(msg.len(), 36);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let b = bundle(5, 3, 11);
        for kind in MatrixKind::ALL {
            let msg = encode_message(&b, kind);
            let (header, matrix) = decode_message(&msg).unwrap();
            assert_eq!(header.kind, kind);
            assert_eq!(header.domain, DomainTag::B);
            assert_eq!(header.lambda, 0.25);
            assert_eq!(&matrix, b.matrix(kind));
        }
    }

    #[test]
    fn flipped_magic_is_rejected() {
        let b = bundle(2, 2, 13);
        let mut msg = encode_message(&b, MatrixKind::Specific);
        msg[0] ^= 0xff;
        assert!(matches!(decode_message(&msg), Err(CoreError::BadMagic)));
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let b = bundle(2, 2, 17);
        let msg = encode_message(&b, MatrixKind::Specific);
        let err = decode_message(&msg[..msg.len() - 3]).unwrap_err();
        match err {
            CoreError::Truncated { expected, actual } => {
                assert_eq!(expected, 36);
                assert_eq!(actual, 33);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn foreign_version_is_rejected() {
        let b = bundle(2, 2, 19);
        let mut msg = encode_message(&b, MatrixKind::Specific);
        msg[4] = 9;
        assert!(matches!(
            decode_message(&msg),
            Err(CoreError::VersionMismatch { got: 9, .. })
        ));
    }
}
