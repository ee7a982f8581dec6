use crate::error::{Error, Result};
use crate::geometry::{LidarPoint, PointCloud};

const POINT_BYTES: usize = 16;

/// Decodes a headerless little-endian `f32` quadruple stream
/// (x, y, z, reflectance) in the velodyne frame.
pub fn read_velodyne(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % POINT_BYTES != 0 {
        return Err(Error::VelodyneLength(bytes.len()));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    Ok(bytes
        .chunks_exact(POINT_BYTES)
        .map(|c| LidarPoint::new(f(&c[0..4]), f(&c[4..8]), f(&c[8..12]), f(&c[12..16])))
        .collect())
}

/// Encodes a cloud as `f32` quadruples. Lossless for clouds whose values are
/// representable in `f32` (anything previously read with [`read_velodyne`]).
pub fn write_velodyne(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.reflectance] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}
