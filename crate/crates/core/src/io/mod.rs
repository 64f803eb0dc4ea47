//! File formats: PLY clouds, keypoint lists, descriptor sets, transforms and
//! run configuration.

mod config;
mod descriptors;
mod keypoints;
mod ply;
mod transform;

pub use config::{ArchKind, RunConfig};
pub use descriptors::{read_descriptors, write_descriptors, Descriptors, DESCRIPTOR_MAGIC};
pub use keypoints::{parse_keypoints, read_keypoints, write_keypoints};
pub use ply::{parse_ply, read_ply, write_ply, PlyEncoding};
pub use transform::{format_transform, parse_transform, read_transform, write_transform};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
