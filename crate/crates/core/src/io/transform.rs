use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

use super::{read_text, write_atomic};

/// Four lines of four numbers: the row-major homogeneous matrix.
pub fn format_transform(t: &RigidTransform) -> String {
    let m = t.to_homogeneous();
    let mut s = String::new();
    for r in 0..4 {
        let row: Vec<String> = (0..4).map(|c| format!("{:e}", m[(r, c)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Reads a 4x4 homogeneous matrix; a slightly non-orthonormal rotation block
/// (limited print precision) is projected onto SO(3).
pub fn parse_transform(text: &str) -> Result<RigidTransform> {
    let mut values = Vec::with_capacity(16);
    for (i, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::MalformedValue {
                line: i + 1,
                reason: format!("'{tok}' is not a number"),
            })?;
            values.push(v);
        }
    }
    if values.len() != 16 {
        return Err(Error::MalformedValue {
            line: 0,
            reason: format!("transform needs 16 values, found {}", values.len()),
        });
    }
    let last = &values[12..16];
    if last[0].abs() > 1e-9 || last[1].abs() > 1e-9 || last[2].abs() > 1e-9 || (last[3] - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidTransform("last row must be 0 0 0 1".into()));
    }
    let r = Matrix3::new(
        values[0], values[1], values[2], values[4], values[5], values[6], values[8], values[9], values[10],
    );
    let t = Vector3::new(values[3], values[7], values[11]);
    RigidTransform::new(r, t).or_else(|_| RigidTransform::new_orthonormalized(r, t))
}

pub fn read_transform(path: impl AsRef<Path>) -> Result<RigidTransform> {
    parse_transform(&read_text(path.as_ref())?)
}

pub fn write_transform(path: impl AsRef<Path>, t: &RigidTransform) -> Result<()> {
    write_atomic(path.as_ref(), format_transform(t).as_bytes())
}
