//! Binary parameter snapshots.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset     | size | content                                  |
//! |------------|------|------------------------------------------|
//! | 0          | 4    | magic `NTKP`                             |
//! | 4          | 4    | `u32` format version (1)                 |
//! | 8          | 8    | `u64` header length `H`                  |
//! | 16         | H    | UTF-8 JSON [`SnapshotHeader`]            |
//! | 16 + H     | 8·k  | `f64` values: `V`, `W^0 .. W^{L−1}`, `w_out` |
//!
//! Matrices are stored row-major.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::net::{NetDims, NetworkParams};

const MAGIC: &[u8; 4] = b"NTKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub dims: NetDims,
    pub seed: u64,
    pub activations: Vec<ActivationKind>,
}

pub fn encode_snapshot(params: &NetworkParams, header: &SnapshotHeader) -> Result<Vec<u8>> {
    if header.dims != params.dims {
        return Err(Error::Format("header dims differ from parameter dims".into()));
    }
    let json = serde_json::to_vec(header)?;
    let n_floats = params.v.len() + params.dims.trained_len() + params.w_out.len();
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * n_floats);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    let floats = params
        .v
        .iter()
        .chain(params.w.iter().flat_map(|w| w.iter()))
        .chain(params.w_out.iter());
    for v in floats {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, len: usize) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated snapshot".into()))?;
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

fn read_matrix(bytes: &[u8], pos: &mut usize, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let raw = take(bytes, pos, 8 * rows * cols)?;
    let vals = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), vals).expect("shape matches length"))
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<(NetworkParams, SnapshotHeader)> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().expect("8 bytes"));
    let hlen = usize::try_from(hlen).map_err(|_| Error::Format("header too large".into()))?;
    let header: SnapshotHeader = serde_json::from_slice(take(bytes, &mut pos, hlen)?)?;
    let dims = NetDims::new(header.dims.d, header.dims.widths.clone())
        .map_err(|e| Error::Format(format!("invalid dims in header: {e}")))?;
    let v = read_matrix(bytes, &mut pos, dims.widths[0], dims.d)?;
    let w = (0..dims.depth())
        .map(|l| {
            let (r, c) = dims.weight_shape(l);
            read_matrix(bytes, &mut pos, r, c)
        })
        .collect::<Result<Vec<_>>>()?;
    let w_out: Array1<f64> = read_matrix(bytes, &mut pos, 1, dims.widths[dims.depth()])?.row(0).to_owned();
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok((NetworkParams { dims, v, w, w_out }, header))
}

pub fn write_snapshot(path: &Path, params: &NetworkParams, header: &SnapshotHeader) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode_snapshot(params, header)?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(NetworkParams, SnapshotHeader)> {
    decode_snapshot(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init;
    use crate::numerics::rng::RngStream;

    fn sample() -> (NetworkParams, SnapshotHeader) {
        let dims = NetDims::new(2, vec![3, 4, 5]).unwrap();
        let p = init(&dims, &RngStream::new(7, 0));
        let h = SnapshotHeader {
            dims,
            seed: 7,
            activations: vec![ActivationKind::Gelu],
        };
        (p, h)
    }

    #[test]
    fn round_trip_is_exact() {
        let (p, h) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        write_snapshot(&path, &p, &h).unwrap();
        let (q, h2) = read_snapshot(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(h, h2);
    }

    #[test]
    fn byte_layout() {
        let (p, h) = sample();
        let bytes = encode_snapshot(&p, &h).unwrap();
        assert_eq!(&bytes[..4], b"NTKP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let floats = 3 * 2 + 4 * 3 + 5 * 4 + 5;
        assert_eq!(bytes.len(), 16 + hlen + 8 * floats);
        let first = f64::from_le_bytes(bytes[16 + hlen..24 + hlen].try_into().unwrap());
        assert_eq!(first, p.v[[0, 0]]);
        let last = f64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        assert_eq!(last, p.w_out[4]);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let (p, h) = sample();
        let bytes = encode_snapshot(&p, &h).unwrap();
        assert!(matches!(decode_snapshot(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_snapshot(&bad), Err(Error::Format(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode_snapshot(&extra), Err(Error::Format(_))));
    }
}
