//! Bit-exact binary serialization of volumes and projection heads.
//!
//! Common layout for all three formats:
//!
//! ```text
//! magic (4 bytes) | header length (u32 LE) | UTF-8 JSON header | payload
//! ```
//!
//! * `AEV1` — embedding volumes. Header `{"dims":[z,y,x],"channels":C,
//!   "spacing_mm":[z,y,x],"normalized":bool}`, payload f32 little-endian in
//!   z-major, y, x, channel order.
//! * `ALV1` — label volumes. Header `{"dims":[z,y,x],"spacing_mm":[z,y,x],
//!   "num_classes":K}`, payload u16 little-endian.
//! * `APH1` — projection head weights. Header `{"in":F,"out":C,
//!   "head":"appearance"|"semantic","dtype":"f64"}`, payload f64
//!   little-endian, row-major (out x in).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedder::{HeadKind, ProjectionHead};
use crate::error::{Error, Result};
use crate::volume::{EmbeddingVolume, LabelVolume};

pub const AEV_MAGIC: [u8; 4] = *b"AEV1";
pub const ALV_MAGIC: [u8; 4] = *b"ALV1";
pub const APH_MAGIC: [u8; 4] = *b"APH1";

#[derive(Serialize, Deserialize)]
struct AevHeader {
    dims: [usize; 3],
    channels: usize,
    spacing_mm: [f64; 3],
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct AlvHeader {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    num_classes: u16,
}

#[derive(Serialize, Deserialize)]
struct AphHeader {
    #[serde(rename = "in")]
    in_channels: usize,
    out: usize,
    head: String,
    dtype: String,
}

fn encode(magic: [u8; 4], header: &impl Serialize, payload: &[u8]) -> Vec<u8> {
    let header_bytes = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + header_bytes.len() + payload.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(payload);
    out
}

/// Splits `bytes` into (header JSON, payload) after checking the magic.
fn decode(bytes: &[u8], magic: [u8; 4]) -> Result<(&[u8], &[u8])> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { context: "magic" });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            context: "header length",
        });
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(Error::Truncated { context: "header" });
    }
    Ok((&bytes[8..8 + header_len], &bytes[8 + header_len..]))
}

fn parse_header<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::BadHeader(e.to_string()))
}

pub fn embedding_to_bytes(vol: &EmbeddingVolume) -> Vec<u8> {
    let header = AevHeader {
        dims: vol.dims(),
        channels: vol.channels(),
        spacing_mm: vol.spacing_mm(),
        normalized: vol.is_normalized(),
    };
    let mut payload = Vec::with_capacity(vol.data().len() * 4);
    for v in vol.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    encode(AEV_MAGIC, &header, &payload)
}

pub fn embedding_from_bytes(bytes: &[u8]) -> Result<EmbeddingVolume> {
    let (header, payload) = decode(bytes, AEV_MAGIC)?;
    let header: AevHeader = parse_header(header)?;
    let expected = header.dims[0] * header.dims[1] * header.dims[2] * header.channels;
    compare_payload_len(payload.len(), expected, 4)?;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingVolume::new(
        header.dims,
        header.channels,
        header.spacing_mm,
        data,
        header.normalized,
    )
}

pub fn label_to_bytes(vol: &LabelVolume) -> Vec<u8> {
    let header = AlvHeader {
        dims: vol.dims(),
        spacing_mm: vol.spacing_mm(),
        num_classes: vol.num_classes(),
    };
    let mut payload = Vec::with_capacity(vol.data().len() * 2);
    for v in vol.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    encode(ALV_MAGIC, &header, &payload)
}

pub fn label_from_bytes(bytes: &[u8]) -> Result<LabelVolume> {
    let (header, payload) = decode(bytes, ALV_MAGIC)?;
    let header: AlvHeader = parse_header(header)?;
    let expected = header.dims[0] * header.dims[1] * header.dims[2];
    compare_payload_len(payload.len(), expected, 2)?;
    let data: Vec<u16> = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LabelVolume::new(header.dims, header.spacing_mm, data, header.num_classes)
}

pub fn head_to_bytes(head: &ProjectionHead) -> Vec<u8> {
    let header = AphHeader {
        in_channels: head.in_channels(),
        out: head.out_channels(),
        head: head.kind().as_str().to_string(),
        dtype: "f64".to_string(),
    };
    let mut payload = Vec::with_capacity(head.weights().len() * 8);
    for v in head.weights() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    encode(APH_MAGIC, &header, &payload)
}

pub fn head_from_bytes(bytes: &[u8]) -> Result<ProjectionHead> {
    let (header, payload) = decode(bytes, APH_MAGIC)?;
    let header: AphHeader = parse_header(header)?;
    if header.dtype != "f64" {
        return Err(Error::BadHeader(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    let kind = HeadKind::from_str(&header.head)
        .ok_or_else(|| Error::BadHeader(format!("unknown head kind {:?}", header.head)))?;
    let expected = header.in_channels * header.out;
    compare_payload_len(payload.len(), expected, 8)?;
    let weights: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ProjectionHead::new(kind, header.in_channels, header.out, weights)
}

fn compare_payload_len(actual_bytes: usize, expected_elems: usize, elem_size: usize) -> Result<()> {
    let expected_bytes = expected_elems * elem_size;
    if actual_bytes < expected_bytes {
        return Err(Error::Truncated { context: "payload" });
    }
    if actual_bytes > expected_bytes || actual_bytes % elem_size != 0 {
        return Err(Error::PayloadLength {
            expected: expected_elems,
            actual: actual_bytes / elem_size,
        });
    }
    Ok(())
}

pub fn write_embedding(vol: &EmbeddingVolume, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, embedding_to_bytes(vol))?;
    Ok(())
}

pub fn read_embedding(path: impl AsRef<Path>) -> Result<EmbeddingVolume> {
    embedding_from_bytes(&fs::read(path)?)
}

pub fn write_label(vol: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, label_to_bytes(vol))?;
    Ok(())
}

pub fn read_label(path: impl AsRef<Path>) -> Result<LabelVolume> {
    label_from_bytes(&fs::read(path)?)
}

pub fn write_head(head: &ProjectionHead, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, head_to_bytes(head))?;
    Ok(())
}

pub fn read_head(path: impl AsRef<Path>) -> Result<ProjectionHead> {
    head_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_embedding(seed: u64, dims: [usize; 3], channels: usize) -> EmbeddingVolume {
        let mut rng = StdRng::seed_from_u64(seed);
        EmbeddingVolume::from_fn(dims, channels, [2.0, 1.5, 2.0], false, |_, out| {
            for v in out.iter_mut() {
                *v = rng.random_range(-10.0f32..10.0);
            }
        })
        .unwrap()
    }

    #[test]
    fn embedding_round_trip_bit_exact() {
        let vol = random_embedding(3, [8, 8, 8], 16);
        let bytes = embedding_to_bytes(&vol);
        let back = embedding_from_bytes(&bytes).unwrap();
        assert_eq!(vol, back);
        assert_eq!(bytes, embedding_to_bytes(&back));
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let vol = random_embedding(4, [2, 2, 2], 3);
        let mut bytes = embedding_to_bytes(&vol);
        bytes[0] = b'X';
        assert!(matches!(
            embedding_from_bytes(&bytes),
            Err(Error::BadMagic { .. })
        ));
        // label reader also rejects embedding files
        let bytes = embedding_to_bytes(&vol);
        assert!(matches!(
            label_from_bytes(&bytes),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn payload_length_mismatch_is_detected() {
        let header = AevHeader {
            dims: [2, 2, 2],
            channels: 4,
            spacing_mm: [2.0; 3],
            normalized: false,
        };
        // header promises 32 floats, provide 100
        let payload = vec![0u8; 100 * 4];
        let bytes = encode(AEV_MAGIC, &header, &payload);
        match embedding_from_bytes(&bytes) {
            Err(Error::PayloadLength { expected: 32, actual: 100 }) => {}
            other => panic!("expected payload length error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_distinct_from_length_mismatch() {
        let vol = random_embedding(5, [2, 2, 2], 4);
        let bytes = embedding_to_bytes(&vol);
        let cut = &bytes[..bytes.len() - 7];
        assert!(matches!(
            embedding_from_bytes(cut),
            Err(Error::Truncated { context: "payload" })
        ));
        assert!(matches!(
            embedding_from_bytes(&bytes[..3]),
            Err(Error::Truncated { context: "magic" })
        ));
    }

    #[test]
    fn malformed_header_json() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&AEV_MAGIC);
        bytes.extend_from_slice(&5u32.to_le_bytes());
        bytes.extend_from_slice(b"{oops");
        assert!(matches!(
            embedding_from_bytes(&bytes),
            Err(Error::BadHeader(_))
        ));
    }

    #[test]
    fn label_round_trip() {
        let mut rng = StdRng::seed_from_u64(9);
        let data: Vec<u16> = (0..4 * 3 * 2).map(|_| rng.random_range(0..7)).collect();
        let vol = LabelVolume::new([4, 3, 2], [2.0; 3], data, 7).unwrap();
        let back = label_from_bytes(&label_to_bytes(&vol)).unwrap();
        assert_eq!(vol, back);
    }

    #[test]
    fn file_round_trip_via_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.aev");
        let vol = random_embedding(11, [1, 64, 64], 2);
        write_embedding(&vol, &path).unwrap();
        let back = read_embedding(&path).unwrap();
        assert_eq!(vol, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_is_identity(
            seed in 0u64..1u64 << 48,
            dz in 1usize..5,
            dy in 1usize..5,
            dx in 1usize..5,
            c in 1usize..6,
        ) {
            let vol = random_embedding(seed, [dz, dy, dx], c);
            let back = embedding_from_bytes(&embedding_to_bytes(&vol)).unwrap();
            prop_assert_eq!(vol, back);
        }
    }
}
