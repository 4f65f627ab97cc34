//! Minimal single-file NIfTI-1 reader: 3-D int16/float32 only.

use std::fs;
use std::path::Path;

use super::{Intensity, Volume};
use crate::error::{Error, Result};

const HEADER_LEN: usize = 348;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

struct Reader<'a> {
    bytes: &'a [u8],
    little: bool,
}

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        if self.little {
            i16::from_le_bytes(b)
        } else {
            i16::from_be_bytes(b)
        }
    }

    fn i32(&self, off: usize) -> i32 {
        let b = [
            self.bytes[off],
            self.bytes[off + 1],
            self.bytes[off + 2],
            self.bytes[off + 3],
        ];
        if self.little {
            i32::from_le_bytes(b)
        } else {
            i32::from_be_bytes(b)
        }
    }

    fn f32(&self, off: usize) -> f32 {
        f32::from_bits(self.i32(off) as u32)
    }
}

/// Reads a `.nii` file into a HU volume. Stored values are rescaled by
/// `scl_slope`/`scl_inter` when the slope is non-zero.
pub fn import_nifti(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let unsupported = |msg: String| Error::UnsupportedFormat(format!("{}: {msg}", path.display()));
    if bytes.len() < HEADER_LEN {
        return Err(unsupported(format!(
            "file is {} bytes, shorter than a NIfTI-1 header",
            bytes.len()
        )));
    }
    let probe = |little| Reader {
        bytes: &bytes,
        little,
    };
    let r = if probe(true).i32(0) == HEADER_LEN as i32 {
        probe(true)
    } else if probe(false).i32(0) == HEADER_LEN as i32 {
        probe(false)
    } else {
        return Err(unsupported("sizeof_hdr is not 348".into()));
    };
    if &bytes[344..348] != b"n+1\0" {
        return Err(unsupported("only single-file NIfTI-1 (magic n+1) is supported".into()));
    }

    let ndim = r.i16(40);
    let dim: Vec<i16> = (0..8).map(|i| r.i16(40 + 2 * i)).collect();
    let extra_dims_trivial = (4..=(ndim.clamp(0, 7) as usize)).all(|i| dim[i] == 1);
    if ndim < 3 || !extra_dims_trivial {
        return Err(unsupported(format!("expected a 3-D image, dim = {dim:?}")));
    }
    if dim[1..=3].iter().any(|&d| d < 1) {
        return Err(Error::Format(format!(
            "{}: non-positive extent in dim = {dim:?}",
            path.display()
        )));
    }
    let (nx, ny, nz) = (dim[1] as usize, dim[2] as usize, dim[3] as usize);

    let datatype = r.i16(70);
    let elem = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => return Err(unsupported(format!("datatype {other} (only int16=4, float32=16)"))),
    };
    let pixdim: Vec<f64> = (1..=3).map(|i| f64::from(r.f32(76 + 4 * i)).abs()).collect();
    let vox_offset = r.f32(108);
    let slope = r.f32(112);
    let inter = r.f32(116);

    if !(vox_offset >= HEADER_LEN as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::Format(format!(
            "{}: invalid vox_offset {vox_offset}",
            path.display()
        )));
    }
    let start = vox_offset as usize;
    let n = nx * ny * nz;
    let end = start + n * elem;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "{}: payload needs {} bytes from offset {start}, file has {}",
            path.display(),
            n * elem,
            bytes.len()
        )));
    }

    let payload = Reader {
        bytes: &bytes[start..end],
        little: r.little,
    };
    let raw: Vec<f32> = match datatype {
        DT_INT16 => (0..n).map(|i| f32::from(payload.i16(2 * i))).collect(),
        _ => (0..n).map(|i| payload.f32(4 * i)).collect(),
    };
    let values = if slope != 0.0 && slope.is_finite() {
        let inter = if inter.is_finite() { inter } else { 0.0 };
        raw.into_iter().map(|v| v * slope + inter).collect()
    } else {
        raw
    };
    Volume::new(
        [nz, ny, nx],
        [pixdim[2], pixdim[1], pixdim[0]],
        values,
        Intensity::Hu,
    )
    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
