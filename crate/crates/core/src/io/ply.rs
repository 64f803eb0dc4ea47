use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

use super::{read_bytes, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_ply(&read_bytes(path.as_ref())?)
}

/// Parses an ASCII or binary little-endian PLY, keeping the vertex `x y z`.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::MalformedHeader {
            line: header.body_line,
            reason: "no vertex element".into(),
        })?;
    let vertex = &header.elements[vertex_pos];
    let mut coord_slots = [usize::MAX; 3];
    for (slot, name) in ["x", "y", "z"].iter().enumerate() {
        coord_slots[slot] = vertex
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
            .ok_or_else(|| Error::MissingCoordinateProperty {
                line: header.body_line,
                property: name.to_string(),
            })?;
    }
    let points = match header.encoding {
        PlyEncoding::Ascii => read_ascii_body(bytes, &header, vertex_pos, coord_slots)?,
        PlyEncoding::BinaryLittleEndian => read_binary_body(bytes, &header, vertex_pos, coord_slots)?,
    };
    PointCloud::new(points)
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();

    let next_line = |offset: &mut usize| -> Option<String> {
        if *offset >= bytes.len() {
            return None;
        }
        let rest = &bytes[*offset..];
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        let line = String::from_utf8_lossy(&rest[..end]).trim_end_matches('\r').to_string();
        *offset += (end + 1).min(rest.len());
        Some(line)
    };

    let malformed = |line: usize, reason: &str| Error::MalformedHeader {
        line,
        reason: reason.to_string(),
    };

    line_no += 1;
    match next_line(&mut offset) {
        Some(l) if l.trim() == "ply" => {}
        _ => return Err(malformed(line_no, "missing 'ply' magic")),
    }
    loop {
        line_no += 1;
        let line = next_line(&mut offset).ok_or_else(|| malformed(line_no, "missing end_header"))?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                let enc = tok.next().ok_or_else(|| malformed(line_no, "format without encoding"))?;
                encoding = Some(match enc {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => {
                        return Err(Error::UnsupportedEncoding {
                            line: line_no,
                            encoding: other.to_string(),
                        })
                    }
                });
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| malformed(line_no, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| malformed(line_no, "element count is not a non-negative integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| malformed(line_no, "property before any element"))?;
                let ty = tok.next().ok_or_else(|| malformed(line_no, "property without type"))?;
                if ty == "list" {
                    let count = tok.next().and_then(Scalar::parse);
                    let item = tok.next().and_then(Scalar::parse);
                    match (count, item, tok.next()) {
                        (Some(count), Some(item), Some(_name)) => {
                            element.properties.push(Property::List { count, item })
                        }
                        _ => return Err(malformed(line_no, "bad list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty).ok_or_else(|| malformed(line_no, "unknown property type"))?;
                    let name = tok.next().ok_or_else(|| malformed(line_no, "property without name"))?;
                    element.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => break,
            Some(_) => return Err(malformed(line_no, "unrecognized header keyword")),
        }
    }
    let encoding = encoding.ok_or_else(|| malformed(line_no, "no format line"))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: offset,
        body_line: line_no,
    })
}

fn read_ascii_body(bytes: &[u8], header: &Header, vertex_pos: usize, coords: [usize; 3]) -> Result<Vec<Point>> {
    let body = String::from_utf8_lossy(&bytes[header.body_offset..]);
    let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut points = Vec::new();
    for (ei, element) in header.elements.iter().enumerate() {
        if ei == vertex_pos {
            points.reserve(element.count.min(bytes.len()));
        }
        for instance in 0..element.count {
            let (idx, line) = lines.next().ok_or_else(|| Error::TruncatedPayload {
                offset: bytes.len(),
                reason: format!("element '{}' has {} of {} rows", element.name, instance, element.count),
            })?;
            let line_no = header.body_line + idx + 1;
            let mut tok = line.split_whitespace();
            let mut values = Vec::with_capacity(element.properties.len());
            for prop in &element.properties {
                let mut next = |ty: Scalar| -> Result<f64> {
                    let t = tok.next().ok_or_else(|| Error::TruncatedPayload {
                        offset: line_no,
                        reason: format!("line {line_no}: too few values"),
                    })?;
                    let bad = |_| Error::MalformedValue {
                        line: line_no,
                        reason: format!("'{t}' is not a number"),
                    };
                    // f32 properties round through f32 so ascii and binary agree
                    if ty == Scalar::F32 {
                        t.parse::<f32>().map(f64::from).map_err(bad)
                    } else {
                        t.parse::<f64>().map_err(bad)
                    }
                };
                match prop {
                    Property::Scalar { ty, .. } => values.push(next(*ty)?),
                    Property::List { count, item } => {
                        let n = next(*count)?;
                        if !(n >= 0.0 && n.fract() == 0.0) {
                            return Err(Error::MalformedValue {
                                line: line_no,
                                reason: "bad list length".into(),
                            });
                        }
                        for _ in 0..n as usize {
                            next(*item)?;
                        }
                        values.push(f64::NAN);
                    }
                }
            }
            if ei == vertex_pos {
                points.push(Point::new(values[coords[0]], values[coords[1]], values[coords[2]]));
            }
        }
    }
    Ok(points)
}

fn read_binary_body(bytes: &[u8], header: &Header, vertex_pos: usize, coords: [usize; 3]) -> Result<Vec<Point>> {
    let mut off = header.body_offset;
    let mut points = Vec::new();
    let take = |off: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        if bytes.len() - *off < n {
            return Err(Error::TruncatedPayload {
                offset: *off,
                reason: format!("need {n} more bytes for {what}"),
            });
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    for (ei, element) in header.elements.iter().enumerate() {
        if ei == vertex_pos {
            points.reserve(element.count.min(bytes.len() / 3));
        }
        let mut values = vec![0.0f64; element.properties.len()];
        for _ in 0..element.count {
            for (pi, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        values[pi] = ty.read_le(take(&mut off, ty.size(), &element.name)?);
                    }
                    Property::List { count, item } => {
                        let n = count.read_le(take(&mut off, count.size(), &element.name)?);
                        if !(n >= 0.0) {
                            return Err(Error::MalformedValue {
                                line: off,
                                reason: "negative list length".into(),
                            });
                        }
                        let len = (n as usize).saturating_mul(item.size());
                        take(&mut off, len, &element.name)?;
                    }
                }
            }
            if ei == vertex_pos {
                points.push(Point::new(values[coords[0]], values[coords[1]], values[coords[2]]));
            }
        }
    }
    Ok(points)
}

/// Writes `x y z` vertices as 32-bit floats.
pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    write_atomic(path.as_ref(), &encode_ply(cloud, encoding))
}

pub(crate) fn encode_ply(cloud: &PointCloud, encoding: PlyEncoding) -> Vec<u8> {
    let enc = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = format!(
        "ply\nformat {enc} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    );
    match encoding {
        PlyEncoding::Ascii => {
            for p in cloud.points() {
                let _ = writeln!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
            }
            out.into_bytes()
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut bytes = out.into_bytes();
            bytes.reserve(cloud.len() * 12);
            for p in cloud.points() {
                for v in [p.x, p.y, p.z] {
                    bytes.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            bytes
        }
    }
}
