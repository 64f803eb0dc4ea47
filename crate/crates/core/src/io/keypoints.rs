use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{read_text, write_atomic};

/// Parses newline-separated point indices, validating range and uniqueness
/// when the cloud size is known.
pub fn parse_keypoints(text: &str, cloud_len: Option<usize>) -> Result<Vec<usize>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let index: usize = line.parse().map_err(|_| Error::MalformedValue {
            line: i + 1,
            reason: format!("'{line}' is not a point index"),
        })?;
        if let Some(len) = cloud_len {
            if index >= len {
                return Err(Error::KeypointOutOfRange { index, len });
            }
        }
        if !seen.insert(index) {
            return Err(Error::DuplicateKeypoint(index));
        }
        out.push(index);
    }
    Ok(out)
}

pub fn read_keypoints(path: impl AsRef<Path>, cloud_len: Option<usize>) -> Result<Vec<usize>> {
    parse_keypoints(&read_text(path.as_ref())?, cloud_len)
}

pub fn write_keypoints(path: impl AsRef<Path>, indices: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(indices.len() * 6);
    for i in indices {
        let _ = writeln!(s, "{i}");
    }
    write_atomic(path.as_ref(), s.as_bytes())
}
