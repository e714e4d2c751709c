use std::path::Path;

use crate::geometry::{PointCloud, Vec3};
use crate::{Error, Result};

/// Property names accepted as per-point instance ids.
const INSTANCE_NAMES: [&str; 3] = ["instance", "instance_id", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
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
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
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

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Which vertex property feeds which output.
#[derive(Debug, Clone, Copy)]
enum Role {
    X,
    Y,
    Z,
    Instance,
    Skip,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    /// Byte offset of the body.
    body: usize,
    /// Line number of the first body line (ASCII).
    body_line: usize,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn offset_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::ParseOffset {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some(len) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(parse_err(path, line_no + 1, "header is not terminated by end_header"));
        };
        let raw = &bytes[pos..pos + len];
        pos += len + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(path, line_no, "header line is not UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(parse_err(path, 1, "missing `ply` magic"));
            }
            continue;
        }
        match keyword {
            "format" => {
                let kind = words.next().unwrap_or("");
                let version = words.next().unwrap_or("");
                if version != "1.0" {
                    return Err(parse_err(path, line_no, format!("unsupported format version `{version}`")));
                }
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(parse_err(path, line_no, format!("unsupported format `{other}`"))),
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = words.next().ok_or_else(|| parse_err(path, line_no, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, line_no, "element count is not a non-negative integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, line_no, "property before any element"))?;
                let rest: Vec<&str> = words.collect();
                let unsupported = |name: &str, ty: &str| Error::UnsupportedProperty {
                    path: path.to_path_buf(),
                    property: name.to_string(),
                    reason: format!("unknown type `{ty}`"),
                };
                let prop = match rest.as_slice() {
                    ["list", count, item, name] => Property::List {
                        name: name.to_string(),
                        count: Scalar::parse(count).ok_or_else(|| unsupported(name, count))?,
                        item: Scalar::parse(item).ok_or_else(|| unsupported(name, item))?,
                    },
                    [ty, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: Scalar::parse(ty).ok_or_else(|| unsupported(name, ty))?,
                    },
                    _ => return Err(parse_err(path, line_no, "malformed property line")),
                };
                element.properties.push(prop);
            }
            "end_header" => break,
            other => return Err(parse_err(path, line_no, format!("unknown header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| parse_err(path, line_no, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body: pos,
        body_line: line_no + 1,
    })
}

fn vertex_roles(vertex: &Element, path: &Path) -> Result<(Vec<Role>, bool)> {
    let mut roles = Vec::with_capacity(vertex.properties.len());
    let mut seen = [false; 3];
    let mut has_instance = false;
    for p in &vertex.properties {
        let name = p.name();
        let axis = ["x", "y", "z"].iter().position(|a| *a == name);
        let is_instance = INSTANCE_NAMES.contains(&name);
        let role = match (p, axis) {
            (Property::Scalar { ty, .. }, Some(k)) => {
                if !ty.is_float() {
                    return Err(Error::UnsupportedProperty {
                        path: path.to_path_buf(),
                        property: name.to_string(),
                        reason: "coordinates must be float or double".into(),
                    });
                }
                seen[k] = true;
                [Role::X, Role::Y, Role::Z][k]
            }
            (Property::Scalar { ty, .. }, None) if is_instance => {
                if ty.is_float() {
                    return Err(Error::UnsupportedProperty {
                        path: path.to_path_buf(),
                        property: name.to_string(),
                        reason: "instance ids must be an integer type".into(),
                    });
                }
                has_instance = true;
                Role::Instance
            }
            (Property::List { .. }, _) if axis.is_some() || is_instance => {
                return Err(Error::UnsupportedProperty {
                    path: path.to_path_buf(),
                    property: name.to_string(),
                    reason: "list properties are not supported here".into(),
                })
            }
            _ => Role::Skip,
        };
        roles.push(role);
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::UnsupportedProperty {
            path: path.to_path_buf(),
            property: ["x", "y", "z"][k].into(),
            reason: "required vertex property is missing".into(),
        });
    }
    Ok((roles, has_instance))
}

struct Builder {
    points: Vec<Vec3>,
    ids: Vec<u32>,
}

impl Builder {
    fn push(&mut self, roles: &[Role], values: &[f64], has_instance: bool) -> std::result::Result<(), String> {
        let mut p = Vec3::zeros();
        let mut id = 0.0;
        for (role, &v) in roles.iter().zip(values) {
            match role {
                Role::X => p.x = v,
                Role::Y => p.y = v,
                Role::Z => p.z = v,
                Role::Instance => id = v,
                Role::Skip => {}
            }
        }
        if has_instance {
            if !(id >= 0.0 && id <= u32::MAX as f64 && id.fract() == 0.0) {
                return Err(format!("instance id {id} is not a non-negative integer"));
            }
            self.ids.push(id as u32);
        }
        self.points.push(p);
        Ok(())
    }

    fn finish(self, has_instance: bool) -> Result<PointCloud> {
        let cloud = PointCloud::new(self.points);
        if has_instance {
            cloud.with_instance_ids(self.ids)
        } else {
            Ok(cloud)
        }
    }
}

/// Parses an ASCII or binary little-endian PLY image. Only the `vertex`
/// element is read; `x`, `y`, `z` must be float/double and an optional
/// integer `instance` (or `instance_id`, `label`) property becomes the
/// per-point instance id. Other elements and properties are skipped.
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let header = parse_header(bytes, path)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(path, header.body_line - 1, "no vertex element"))?;
    let (roles, has_instance) = vertex_roles(&header.elements[vertex_pos], path)?;
    let mut builder = Builder {
        points: Vec::with_capacity(header.elements[vertex_pos].count),
        ids: Vec::new(),
    };
    match header.format {
        PlyFormat::Ascii => {
            let body = std::str::from_utf8(&bytes[header.body..])
                .map_err(|_| parse_err(path, header.body_line, "body is not UTF-8"))?;
            let mut lines = body.lines().enumerate().map(|(k, l)| (header.body_line + k, l));
            for (ei, element) in header.elements.iter().enumerate() {
                for _ in 0..element.count {
                    let (line_no, line) = loop {
                        match lines.next() {
                            Some((_, l)) if l.trim().is_empty() => continue,
                            Some(x) => break x,
                            None => {
                                return Err(parse_err(
                                    path,
                                    header.body_line + body.lines().count(),
                                    format!("unexpected end of file in element `{}`", element.name),
                                ))
                            }
                        }
                    };
                    if ei != vertex_pos {
                        continue;
                    }
                    let words: Vec<&str> = line.split_whitespace().collect();
                    if words.len() != roles.len() {
                        return Err(parse_err(
                            path,
                            line_no,
                            format!("expected {} values, found {}", roles.len(), words.len()),
                        ));
                    }
                    let values = words
                        .iter()
                        .map(|w| w.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| parse_err(path, line_no, format!("bad number: {e}")))?;
                    builder
                        .push(&roles, &values, has_instance)
                        .map_err(|m| parse_err(path, line_no, m))?;
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut pos = header.body;
            let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
                let s = bytes
                    .get(*pos..*pos + n)
                    .ok_or_else(|| offset_err(path, *pos, "unexpected end of file"))?;
                *pos += n;
                Ok(s)
            };
            let mut values = vec![0.0; roles.len()];
            for (ei, element) in header.elements.iter().enumerate() {
                for _ in 0..element.count {
                    let start = pos;
                    for (k, prop) in element.properties.iter().enumerate() {
                        match prop {
                            Property::Scalar { ty, .. } => {
                                let v = ty.read_le(take(&mut pos, ty.size())?);
                                if ei == vertex_pos {
                                    values[k] = v;
                                }
                            }
                            Property::List { count, item, .. } => {
                                let n = count.read_le(take(&mut pos, count.size())?);
                                if !(n >= 0.0) {
                                    return Err(offset_err(path, pos, "negative list length"));
                                }
                                take(&mut pos, n as usize * item.size())?;
                            }
                        }
                    }
                    if ei == vertex_pos {
                        builder
                            .push(&roles, &values, has_instance)
                            .map_err(|m| offset_err(path, start, m))?;
                    }
                }
            }
        }
    }
    builder.finish(has_instance)
}

/// Serializes a cloud as PLY with double coordinates and, when present,
/// a `uint instance` property. `comments` become header comment lines.
pub fn ply_bytes(cloud: &PointCloud, format: PlyFormat, comments: &[String]) -> Vec<u8> {
    let mut out = String::from("ply\n");
    out.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    for c in comments {
        for line in c.lines() {
            out.push_str(&format!("comment {line}\n"));
        }
    }
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    let ids = cloud.instance_ids.as_deref();
    if ids.is_some() {
        out.push_str("property uint instance\n");
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        match format {
            PlyFormat::Ascii => {
                let mut line = format!("{} {} {}", p.x, p.y, p.z);
                if let Some(ids) = ids {
                    line.push_str(&format!(" {}", ids[i]));
                }
                line.push('\n');
                bytes.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for c in [p.x, p.y, p.z] {
                    bytes.extend_from_slice(&c.to_le_bytes());
                }
                if let Some(ids) = ids {
                    bytes.extend_from_slice(&ids[i].to_le_bytes());
                }
            }
        }
    }
    bytes
}
