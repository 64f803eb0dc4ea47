use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::io::{read_ply, read_text, read_transform, write_atomic};

/// One manifest line: two fragments and the transform taking `frag_b` into
/// `frag_a`'s frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub frag_a: PathBuf,
    pub frag_b: PathBuf,
    pub transform: PathBuf,
}

/// Parses `frag_a.ply frag_b.ply transform.txt` lines. Relative paths are
/// resolved against `base`; blank lines and `#` comments are ignored.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::MalformedValue {
                line: i + 1,
                reason: format!("expected 3 paths, found {}", fields.len()),
            });
        }
        let resolve = |s: &str| {
            let p = Path::new(s);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        out.push(ManifestEntry {
            frag_a: resolve(fields[0]),
            frag_b: resolve(fields[1]),
            transform: resolve(fields[2]),
        });
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&read_text(path)?, base)
}

/// Writes entries with paths relative to the manifest's directory where
/// possible.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
    let mut text = String::new();
    for e in entries {
        text += &format!("{} {} {}\n", rel(&e.frag_a), rel(&e.frag_b), rel(&e.transform));
    }
    write_atomic(path, text.as_bytes())
}

/// A loaded fragment pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentPair {
    pub name_a: String,
    pub name_b: String,
    pub a: PointCloud,
    pub b: PointCloud,
    /// Maps `b` into `a`'s frame.
    pub t_gt: RigidTransform,
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

impl FragmentPair {
    pub fn load(entry: &ManifestEntry) -> Result<Self> {
        Ok(Self {
            name_a: stem(&entry.frag_a),
            name_b: stem(&entry.frag_b),
            a: read_ply(&entry.frag_a)?,
            b: read_ply(&entry.frag_b)?,
            t_gt: read_transform(&entry.transform)?,
        })
    }
}
