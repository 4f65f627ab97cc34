use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Intensity, Volume};
use crate::error::{Error, Result};

const DTYPE_F32LE: &str = "f32le";
const ORDER_X_FASTEST: &str = "x-fastest";

/// JSON sidecar describing a `.vol.raw` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
    pub intensity: Intensity,
}

impl VolumeHeader {
    fn for_volume(v: &Volume) -> Self {
        Self {
            dims: v.dims(),
            spacing_mm: v.spacing_mm(),
            dtype: DTYPE_F32LE.into(),
            order: ORDER_X_FASTEST.into(),
            intensity: v.intensity(),
        }
    }
}

/// Sidecar and payload paths for a volume named by `path`, which may be the
/// bare stem or either of the two files.
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(".vol.json")
        .or_else(|| s.strip_suffix(".vol.raw"))
        .unwrap_or(&s);
    (
        PathBuf::from(format!("{stem}.vol.json")),
        PathBuf::from(format!("{stem}.vol.raw")),
    )
}

pub fn save_volume(path: &Path, v: &Volume) -> Result<()> {
    let (json_path, raw_path) = volume_paths(path);
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let header = VolumeHeader::for_volume(v);
    let json = serde_json::to_vec_pretty(&header).map_err(|e| Error::json(&json_path, e))?;
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    let mut raw = Vec::with_capacity(v.len() * 4);
    for &x in v.values() {
        raw.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&raw_path, raw).map_err(|e| Error::io(&raw_path, e))
}

pub fn load_volume(path: &Path) -> Result<Volume> {
    let (json_path, raw_path) = volume_paths(path);
    let text = fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let header: VolumeHeader =
        serde_json::from_slice(&text).map_err(|e| Error::json(&json_path, e))?;
    if header.dtype != DTYPE_F32LE {
        return Err(Error::Format(format!(
            "{}: unknown dtype {:?}",
            json_path.display(),
            header.dtype
        )));
    }
    if header.order != ORDER_X_FASTEST {
        return Err(Error::Format(format!(
            "{}: unknown voxel order {:?}",
            json_path.display(),
            header.order
        )));
    }
    let raw = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let n: usize = header.dims.iter().product();
    if raw.len() != n * 4 {
        return Err(Error::Format(format!(
            "{}: dims {:?} need {} bytes, payload has {}",
            raw_path.display(),
            header.dims,
            n * 4,
            raw.len()
        )));
    }
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Volume::new(header.dims, header.spacing_mm, values, header.intensity)
        .map_err(|e| Error::Format(format!("{}: {e}", json_path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_accept_stem_or_either_file() {
        let (j, r) = volume_paths(Path::new("a/b/scan"));
        assert_eq!(j, PathBuf::from("a/b/scan.vol.json"));
        assert_eq!(r, PathBuf::from("a/b/scan.vol.raw"));
        assert_eq!(volume_paths(Path::new("a/scan.vol.raw")).0, PathBuf::from("a/scan.vol.json"));
        assert_eq!(volume_paths(Path::new("a/scan.vol.json")).1, PathBuf::from("a/scan.vol.raw"));
    }

    #[test]
    fn header_serializes_with_wire_names() {
        let v = Volume::filled([1, 2, 3], [1.0, 1.5, 2.0], 0.0, Intensity::Norm255).unwrap();
        let json = serde_json::to_value(VolumeHeader::for_volume(&v)).unwrap();
        assert_eq!(json["intensity"], "norm255");
        assert_eq!(json["dtype"], "f32le");
        assert_eq!(json["order"], "x-fastest");
        assert_eq!(json["dims"], serde_json::json!([1, 2, 3]));
    }
}
