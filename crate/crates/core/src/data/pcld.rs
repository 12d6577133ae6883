//! `.pcld` cloud files: `PCLD`, u32 version, u32 count, then count×3 f32, all little-endian.

use std::fs;
use std::path::Path;

use super::DataError;
use crate::geometry::PointCloud;

const MAGIC: &[u8; 4] = b"PCLD";
const VERSION: u32 = 1;

pub fn encode_pcld(cloud: &PointCloud) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + cloud.len() * 12);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in &cloud.points {
        for v in p {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    buf
}

pub fn write_pcld(path: &Path, cloud: &PointCloud) -> Result<(), DataError> {
    fs::write(path, encode_pcld(cloud)).map_err(|e| DataError::io(path, e))
}

pub fn read_pcld(path: &Path) -> Result<PointCloud, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    let bad = |reason: &str| DataError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("not a PCLD file"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(4) != VERSION {
        return Err(bad(&format!("unsupported version {}", word(4))));
    }
    let m = word(8) as usize;
    if bytes.len() != 12 + m * 12 {
        return Err(bad(&format!("expected {} points, file is {} bytes", m, bytes.len())));
    }
    let points = bytes[12..]
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().expect("4 bytes")) as f64;
            [f(0), f(1), f(2)]
        })
        .collect();
    PointCloud::new(points).map_err(|e| bad(&e.to_string()))
}
