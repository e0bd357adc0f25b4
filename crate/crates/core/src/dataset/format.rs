//! Binary grid files: `"TOPO"`, version byte `0x01`, little-endian `u32`
//! `nely` then `nelx`, then `nelx * nely` little-endian `f32` densities,
//! row-major with row 0 at the top.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::DensityField;

pub const GRID_MAGIC: &[u8; 4] = b"TOPO";
pub const GRID_VERSION: u8 = 0x01;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

pub fn encode_grid(nelx: usize, nely: usize, values: &[f32]) -> Result<Vec<u8>> {
    if values.len() != nelx * nely {
        return Err(Error::Shape(format!(
            "{} values for a {nelx}x{nely} grid",
            values.len()
        )));
    }
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| Error::Shape(format!("grid dimension {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    out.extend_from_slice(GRID_MAGIC);
    out.push(GRID_VERSION);
    out.extend_from_slice(&dim(nely)?.to_le_bytes());
    out.extend_from_slice(&dim(nelx)?.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Returns `(nelx, nely, values)`.
pub fn decode_grid(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f32>), String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if &bytes[..4] != GRID_MAGIC {
        return Err("bad magic".into());
    }
    if bytes[4] != GRID_VERSION {
        return Err(format!("unsupported version {}", bytes[4]));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let nely = word(5);
    let nelx = word(9);
    let count = nelx
        .checked_mul(nely)
        .ok_or_else(|| "grid dimensions overflow".to_string())?;
    if count == 0 {
        return Err(format!("empty grid {nelx}x{nely}"));
    }
    let expected = HEADER_LEN + 4 * count;
    if bytes.len() != expected {
        return Err(format!("expected {expected} bytes, found {}", bytes.len()));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((nelx, nely, values))
}

/// Writes through a temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_grid(path: &Path, field: &DensityField) -> Result<()> {
    write_grid_f32(path, field.nelx(), field.nely(), &field.to_f32())
}

pub fn write_grid_f32(path: &Path, nelx: usize, nely: usize, values: &[f32]) -> Result<()> {
    write_atomic(path, &encode_grid(nelx, nely, values)?)
}

pub fn read_grid_f32(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes).map_err(|reason| Error::format(path, reason))
}

pub fn read_grid(path: &Path) -> Result<DensityField> {
    let (nelx, nely, values) = read_grid_f32(path)?;
    DensityField::from_f32_clamped(nelx, nely, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_layout() {
        let bytes = encode_grid(2, 1, &[0.5, 1.0]).unwrap();
        let mut expected = b"TOPO\x01".to_vec();
        expected.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0]);
        expected.extend_from_slice(&0.5f32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_corruption() {
        let good = encode_grid(2, 2, &[0.0; 4]).unwrap();
        assert!(decode_grid(&good[..good.len() - 1]).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode_grid(&bad_magic).is_err());
        let mut bad_version = good;
        bad_version[4] = 2;
        assert!(decode_grid(&bad_version).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(nelx in 1usize..12, nely in 1usize..12, seed in any::<u32>()) {
            let values: Vec<f32> = (0..nelx * nely)
                .map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 97) % 0x3f80_0000))
                .collect();
            let (x, y, back) = decode_grid(&encode_grid(nelx, nely, &values).unwrap()).unwrap();
            prop_assert_eq!((x, y), (nelx, nely));
            prop_assert_eq!(
                back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
