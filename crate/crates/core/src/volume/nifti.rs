//! Uncompressed single-file NIfTI-1 (`n+1`), little-endian only.

use std::path::Path;

use super::{Volume, VolumeKind};
use crate::error::{Error, Result};

pub const NIFTI_HEADER_SIZE: usize = 348;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_MAGIC: usize = 344;

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

pub fn read_nifti(path: impl AsRef<Path>, kind: VolumeKind) -> Result<Volume> {
    parse_nifti(&std::fs::read(path)?, kind)
}

pub fn write_nifti(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    super::write_volume(v, path)
}

pub(crate) fn parse_nifti(bytes: &[u8], kind: VolumeKind) -> Result<Volume> {
    if bytes.len() < NIFTI_HEADER_SIZE {
        return Err(Error::Parse(format!("file is {} bytes, shorter than a NIfTI-1 header", bytes.len())));
    }
    if &bytes[OFF_MAGIC..OFF_MAGIC + 4] != b"n+1\0" {
        return Err(Error::Parse(format!("bad magic {:?}", &bytes[OFF_MAGIC..OFF_MAGIC + 4])));
    }
    let sizeof_hdr = i32_at(bytes, 0);
    if sizeof_hdr != NIFTI_HEADER_SIZE as i32 {
        if sizeof_hdr.swap_bytes() == NIFTI_HEADER_SIZE as i32 {
            return Err(Error::UnsupportedFormat("big-endian NIfTI".into()));
        }
        return Err(Error::Parse(format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
    }

    let ndim = i16_at(bytes, OFF_DIM);
    if !(1..=7).contains(&ndim) {
        return Err(Error::InvalidHeader(format!("dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 3];
    for (i, d) in dims.iter_mut().enumerate() {
        if (i as i16) < ndim {
            let v = i16_at(bytes, OFF_DIM + 2 * (i + 1));
            if v <= 0 {
                return Err(Error::InvalidHeader(format!("dim[{}] = {v}", i + 1)));
            }
            *d = v as usize;
        }
    }
    for i in 3..ndim as usize {
        let v = i16_at(bytes, OFF_DIM + 2 * (i + 1));
        if v != 1 {
            return Err(Error::UnsupportedFormat(format!("dim[{}] = {v}; only 3-D scalar volumes", i + 1)));
        }
    }
    let mut spacing = [1f32; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        if (i as i16) < ndim {
            let v = f32_at(bytes, OFF_PIXDIM + 4 * (i + 1));
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidHeader(format!("pixdim[{}] = {v}", i + 1)));
            }
            *s = v;
        }
    }

    let datatype = i16_at(bytes, OFF_DATATYPE);
    let width = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => return Err(Error::UnsupportedFormat(format!("datatype {other}"))),
    };
    let bitpix = i16_at(bytes, OFF_BITPIX);
    if bitpix != 8 * width as i16 {
        return Err(Error::InvalidHeader(format!("bitpix {bitpix} does not match datatype {datatype}")));
    }
    let vox_offset = f32_at(bytes, OFF_VOX_OFFSET);
    if !(vox_offset >= NIFTI_HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::InvalidHeader(format!("vox_offset = {vox_offset}")));
    }
    let start = vox_offset as usize;
    let n: usize = dims.iter().product();
    let end = start + n * width;
    if bytes.len() < end {
        return Err(Error::Parse(format!("data truncated: need {end} bytes, file has {}", bytes.len())));
    }
    let payload = &bytes[start..end];
    let mut data: Vec<f32> = match datatype {
        DT_UINT8 => payload.iter().map(|&b| b as f32).collect(),
        DT_INT16 => payload.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f32).collect(),
        _ => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
    };

    let slope = f32_at(bytes, OFF_SCL_SLOPE);
    let inter = f32_at(bytes, OFF_SCL_INTER);
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope != 1.0 || inter != 0.0) {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }
    Volume::new(dims, spacing, data, kind)
}

pub(crate) fn encode_nifti(v: &Volume) -> Vec<u8> {
    let (datatype, bitpix) = match v.kind() {
        VolumeKind::Label => (DT_UINT8, 8i16),
        VolumeKind::Intensity => (DT_FLOAT32, 32i16),
    };
    let mut h = vec![0u8; NIFTI_HEADER_SIZE];
    h[0..4].copy_from_slice(&(NIFTI_HEADER_SIZE as i32).to_le_bytes());
    let dims = v.dims();
    let mut dim = [1i16; 8];
    dim[0] = 3;
    for i in 0..3 {
        dim[i + 1] = dims[i] as i16;
    }
    for (i, d) in dim.iter().enumerate() {
        h[OFF_DIM + 2 * i..OFF_DIM + 2 * i + 2].copy_from_slice(&d.to_le_bytes());
    }
    h[OFF_DATATYPE..OFF_DATATYPE + 2].copy_from_slice(&datatype.to_le_bytes());
    h[OFF_BITPIX..OFF_BITPIX + 2].copy_from_slice(&bitpix.to_le_bytes());
    let sp = v.spacing();
    let pixdim = [1.0f32, sp[0], sp[1], sp[2], 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        h[OFF_PIXDIM + 4 * i..OFF_PIXDIM + 4 * i + 4].copy_from_slice(&p.to_le_bytes());
    }
    h[OFF_VOX_OFFSET..OFF_VOX_OFFSET + 4].copy_from_slice(&(NIFTI_HEADER_SIZE as f32).to_le_bytes());
    h[OFF_SCL_SLOPE..OFF_SCL_SLOPE + 4].copy_from_slice(&1.0f32.to_le_bytes());
    // millimetres
    h[OFF_XYZT_UNITS] = 2;
    h[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(b"n+1\0");

    match v.kind() {
        VolumeKind::Label => h.extend(v.data().iter().map(|&x| x as u8)),
        VolumeKind::Intensity => {
            h.reserve(4 * v.len());
            for x in v.data() {
                h.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    h
}
