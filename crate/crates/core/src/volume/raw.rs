//! A minimal raw format: one text header line, then little-endian voxels.
//!
//! ```text
//! RAWVOL <nx> <ny> <nz> <sx> <sy> <sz> <dtype>\n<data>
//! ```
//!
//! `dtype` is one of `uint8`, `int16`, `float32`.

use std::path::Path;

use super::{Volume, VolumeKind};
use crate::error::{Error, Result};

pub(crate) const RAW_MAGIC: &[u8] = b"RAWVOL ";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawDtype {
    Uint8,
    Int16,
    Float32,
}

impl RawDtype {
    fn name(self) -> &'static str {
        match self {
            RawDtype::Uint8 => "uint8",
            RawDtype::Int16 => "int16",
            RawDtype::Float32 => "float32",
        }
    }

    fn width(self) -> usize {
        match self {
            RawDtype::Uint8 => 1,
            RawDtype::Int16 => 2,
            RawDtype::Float32 => 4,
        }
    }
}

pub fn read_raw(path: impl AsRef<Path>, kind: VolumeKind) -> Result<Volume> {
    parse_raw(&std::fs::read(path)?, kind)
}

pub fn write_raw(v: &Volume, dtype: RawDtype, path: impl AsRef<Path>) -> Result<()> {
    v.validate()?;
    let [nx, ny, nz] = v.dims();
    let [sx, sy, sz] = v.spacing();
    let mut out = format!("RAWVOL {nx} {ny} {nz} {sx} {sy} {sz} {}\n", dtype.name()).into_bytes();
    for &x in v.data() {
        match dtype {
            RawDtype::Uint8 => {
                if x != x.round() || !(0.0..=255.0).contains(&x) {
                    return Err(Error::InvalidParameter(format!("{x} is not representable as uint8")));
                }
                out.push(x as u8)
            }
            RawDtype::Int16 => {
                if x != x.round() || !(i16::MIN as f32..=i16::MAX as f32).contains(&x) {
                    return Err(Error::InvalidParameter(format!("{x} is not representable as int16")));
                }
                out.extend_from_slice(&(x as i16).to_le_bytes())
            }
            RawDtype::Float32 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub(crate) fn parse_raw(bytes: &[u8], kind: VolumeKind) -> Result<Volume> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("raw header has no newline".into()))?;
    let line = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Parse("raw header is not UTF-8".into()))?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 8 || fields[0] != "RAWVOL" {
        return Err(Error::Parse(format!("malformed raw header {line:?}")));
    }
    let mut dims = [0usize; 3];
    for i in 0..3 {
        let d: i64 = fields[1 + i].parse().map_err(|_| Error::Parse(format!("bad dimension {:?}", fields[1 + i])))?;
        if d <= 0 {
            return Err(Error::InvalidHeader(format!("dimension {d}")));
        }
        dims[i] = d as usize;
    }
    let mut spacing = [0f32; 3];
    for i in 0..3 {
        spacing[i] = fields[4 + i].parse().map_err(|_| Error::Parse(format!("bad spacing {:?}", fields[4 + i])))?;
        if !(spacing[i] > 0.0) {
            return Err(Error::InvalidHeader(format!("spacing {}", spacing[i])));
        }
    }
    let dtype = match fields[7] {
        "uint8" => RawDtype::Uint8,
        "int16" => RawDtype::Int16,
        "float32" => RawDtype::Float32,
        other => return Err(Error::UnsupportedFormat(format!("raw dtype {other:?}"))),
    };
    let n: usize = dims.iter().product();
    let payload = &bytes[nl + 1..];
    if payload.len() != n * dtype.width() {
        return Err(Error::Parse(format!("expected {} data bytes, found {}", n * dtype.width(), payload.len())));
    }
    let data = match dtype {
        RawDtype::Uint8 => payload.iter().map(|&b| b as f32).collect(),
        RawDtype::Int16 => payload.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f32).collect(),
        RawDtype::Float32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    Volume::new(dims, spacing, data, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_each_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume::from_fn([2, 3, 4], [1.0, 1.5, 2.0], VolumeKind::Label, |x, y, z| ((x * y + z) % 5) as f32)
            .unwrap();
        for dt in [RawDtype::Uint8, RawDtype::Int16, RawDtype::Float32] {
            let p = dir.path().join(format!("v_{}.raw", dt.name()));
            write_raw(&v, dt, &p).unwrap();
            assert_eq!(read_raw(&p, VolumeKind::Label).unwrap(), v);
            assert_eq!(crate::volume::read_volume(&p, VolumeKind::Label).unwrap(), v);
        }
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(parse_raw(b"RAWVOL 1 1\n", VolumeKind::Intensity), Err(Error::Parse(_))));
        assert!(matches!(
            parse_raw(b"RAWVOL 1 1 1 1 1 1 float64\n00000000", VolumeKind::Intensity),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            parse_raw(b"RAWVOL 1 0 1 1 1 1 uint8\n", VolumeKind::Intensity),
            Err(Error::InvalidHeader(_))
        ));
        assert!(matches!(parse_raw(b"RAWVOL 1 1 1 1 1 1 uint8\n", VolumeKind::Intensity), Err(Error::Parse(_))));
    }
}
