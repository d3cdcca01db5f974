//! `UDFETNSR` tensors: 8-byte magic, `u32` rank, `u32` dims, then `f32`
//! payload, all little-endian.

use std::path::Path;

use udfe_nn::Tensor;

use super::{io_err, DataError, DataResult};

pub const RAW_MAGIC: &[u8; 8] = b"UDFETNSR";
const MAX_RANK: usize = 8;

pub fn encode_raw(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.ndim() + 4 * t.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], pos: usize) -> DataResult<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or(DataError::Truncated { expected: pos + 4, found: bytes.len() })
}

pub fn decode_raw(bytes: &[u8]) -> DataResult<Tensor<f32>> {
    if !bytes.starts_with(RAW_MAGIC) {
        return Err(DataError::UnknownMagic(bytes.iter().take(8).copied().collect()));
    }
    let rank = u32_at(bytes, 8)? as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(DataError::DimensionOverflow(format!("rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut n: usize = 1;
    for i in 0..rank {
        let d = u32_at(bytes, 12 + 4 * i)? as usize;
        if d == 0 {
            return Err(DataError::Malformed(format!("zero-sized axis {i}")));
        }
        n = n
            .checked_mul(d)
            .and_then(|n| n.checked_mul(4).map(|_| n))
            .ok_or_else(|| DataError::DimensionOverflow(format!("shape prefix {shape:?} x {d}")))?;
        shape.push(d);
    }
    let start = 12 + 4 * rank;
    let payload = &bytes[start.min(bytes.len())..];
    if payload.len() < 4 * n {
        return Err(DataError::Truncated { expected: 4 * n, found: payload.len() });
    }
    let data = payload[..4 * n]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok(Tensor::new(shape, data).expect("raw shape"))
}

pub fn read_raw(path: &Path) -> DataResult<Tensor<f32>> {
    decode_raw(&std::fs::read(path).map_err(|e| io_err(path, e))?)
}

pub fn write_raw(path: &Path, t: &Tensor<f32>) -> DataResult<()> {
    std::fs::write(path, encode_raw(t)).map_err(|e| io_err(path, e))
}
