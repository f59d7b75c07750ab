use std::fmt::Write;

use super::mesh::{fan, TriangleMesh};
use crate::error::{Error, Result};
use crate::pointvoxel::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Kind {
    fn parse(name: &str) -> Option<Kind> {
        Some(match name {
            "char" | "int8" => Kind::I8,
            "uchar" | "uint8" => Kind::U8,
            "short" | "int16" => Kind::I16,
            "ushort" | "uint16" => Kind::U16,
            "int" | "int32" => Kind::I32,
            "uint" | "uint32" => Kind::U32,
            "float" | "float32" => Kind::F32,
            "double" | "float64" => Kind::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Kind::I8 | Kind::U8 => 1,
            Kind::I16 | Kind::U16 => 2,
            Kind::I32 | Kind::U32 | Kind::F32 => 4,
            Kind::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Kind::I8 => b[0] as i8 as f64,
            Kind::U8 => b[0] as f64,
            Kind::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Kind::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Kind::I32 => i32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Kind::U32 => u32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Kind::F32 => f32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Kind::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, kind: Kind },
    List { name: String, count: Kind, item: Kind },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse_line(line_no + 1, "unterminated header"))?;
        line_no += 1;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::parse_line(line_no, "header is not UTF-8"))?
            .trim_end_matches('\r');
        offset += nl + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line.trim() != "ply" {
                return Err(Error::parse_line(1, "missing 'ply' magic"));
            }
            continue;
        }
        let bad = |msg: &str| Error::parse_line(line_no, msg.to_string());
        match tok.first().copied() {
            Some("format") => {
                format = Some(match tok.get(1).copied() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(other) => return Err(bad(&format!("unsupported format {other}"))),
                    None => return Err(bad("format line needs a type")),
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let (name, count) = match tok.as_slice() {
                    [_, name, count] => (name, count),
                    _ => return Err(bad("element line needs a name and a count")),
                };
                let count = count.parse().map_err(|_| bad("bad element count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| bad("property before any element"))?;
                let prop = match tok.as_slice() {
                    [_, "list", count, item, name] => Property::List {
                        name: name.to_string(),
                        count: Kind::parse(count).ok_or_else(|| bad("unknown list count type"))?,
                        item: Kind::parse(item).ok_or_else(|| bad("unknown list item type"))?,
                    },
                    [_, kind, name] => Property::Scalar {
                        name: name.to_string(),
                        kind: Kind::parse(kind).ok_or_else(|| bad("unknown property type"))?,
                    },
                    _ => return Err(bad("malformed property line")),
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(bad(&format!("unknown header keyword {other}"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse_line(line_no, "header lacks a format line"))?;
    Ok(Header {
        format,
        elements,
        body_offset: offset,
        body_line: line_no,
    })
}

/// Sequential value reader over either body encoding.
trait Source {
    fn next(&mut self, kind: Kind) -> Result<f64>;
    /// Marks the start of an element row (ASCII rows are lines).
    fn begin_row(&mut self) -> Result<()>;
}

struct Binary<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Source for Binary<'_> {
    fn next(&mut self, kind: Kind) -> Result<f64> {
        let end = self.pos + kind.size();
        if end > self.bytes.len() {
            return Err(Error::parse_offset(self.pos, "unexpected end of binary body"));
        }
        let v = kind.read(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(v)
    }

    fn begin_row(&mut self) -> Result<()> {
        Ok(())
    }
}

struct Ascii<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    tokens: std::vec::IntoIter<&'a str>,
    line_no: usize,
    first_line: usize,
}

impl<'a> Source for Ascii<'a> {
    fn begin_row(&mut self) -> Result<()> {
        loop {
            let (i, line) = self
                .lines
                .next()
                .ok_or_else(|| Error::parse_line(self.line_no + 1, "unexpected end of file"))?;
            self.line_no = self.first_line + i + 1;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if !toks.is_empty() {
                self.tokens = toks.into_iter();
                return Ok(());
            }
        }
    }

    fn next(&mut self, kind: Kind) -> Result<f64> {
        let t = self
            .tokens
            .next()
            .ok_or_else(|| Error::parse_line(self.line_no, "too few values on line"))?;
        let v: f64 = t
            .parse()
            .map_err(|_| Error::parse_line(self.line_no, format!("bad value {t:?}")))?;
        if !matches!(kind, Kind::F32 | Kind::F64) && v.fract() != 0.0 {
            return Err(Error::parse_line(self.line_no, format!("expected an integer, got {t}")));
        }
        Ok(v)
    }
}

const MAX_LIST: f64 = 65536.0;

fn read_body(header: &Header, src: &mut dyn Source) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let axes: Vec<Option<usize>> = el
            .props
            .iter()
            .map(|p| match p {
                Property::Scalar { name, .. } if is_vertex => ["x", "y", "z"].iter().position(|a| a == name),
                _ => None,
            })
            .collect();
        if is_vertex && (0..3).any(|a| !axes.contains(&Some(a))) {
            return Err(Error::parse_line(header.body_line, "vertex element lacks x, y or z"));
        }
        if el.props.is_empty() && el.count > 0 {
            return Err(Error::parse_line(header.body_line, format!("element {} has no properties", el.name)));
        }
        for _ in 0..el.count {
            src.begin_row()?;
            let mut p = [0.0; 3];
            for (prop, axis) in el.props.iter().zip(&axes) {
                match prop {
                    Property::Scalar { kind, .. } => {
                        let v = src.next(*kind)?;
                        if let Some(a) = axis {
                            if !v.is_finite() {
                                return Err(Error::parse_line(header.body_line, "non-finite vertex coordinate"));
                            }
                            p[*a] = v;
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = src.next(*count)?;
                        if !(0.0..=MAX_LIST).contains(&n) {
                            return Err(Error::parse_line(header.body_line, format!("list length {n} out of range")));
                        }
                        let wanted = is_face && (name == "vertex_indices" || name == "vertex_index");
                        let mut poly = Vec::with_capacity(n as usize);
                        for _ in 0..n as usize {
                            let v = src.next(*item)?;
                            if wanted {
                                if v < 0.0 || v.fract() != 0.0 {
                                    return Err(Error::parse_line(header.body_line, format!("bad vertex index {v}")));
                                }
                                poly.push(v as usize);
                            }
                        }
                        if wanted {
                            if poly.len() < 3 {
                                return Err(Error::parse_line(header.body_line, "face needs at least three vertices"));
                            }
                            fan(&poly, &mut faces);
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(p);
            }
        }
    }
    Ok((vertices, faces))
}

/// Parse PLY (ASCII or binary little-endian). Only the `vertex` x/y/z and
/// `face` index lists are kept; other elements and properties are skipped.
pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_offset..];
    let (vertices, faces) = match header.format {
        Format::BinaryLe => {
            let mut src = Binary { bytes, pos: header.body_offset };
            read_body(&header, &mut src)?
        }
        Format::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|e| Error::parse_offset(header.body_offset + e.valid_up_to(), "invalid UTF-8"))?;
            let mut src = Ascii {
                lines: text.lines().enumerate(),
                tokens: Vec::new().into_iter(),
                line_no: header.body_line,
                first_line: header.body_line,
            };
            read_body(&header, &mut src)?
        }
    };
    if faces.is_empty() {
        return Err(Error::parse_line(header.body_line, "no faces in file"));
    }
    if let Some(&bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
        return Err(Error::parse_line(
            header.body_line,
            format!("face index {bad} out of range for {} vertices", vertices.len()),
        ));
    }
    TriangleMesh::new(vertices, faces)
}

pub fn encode_ply_ascii(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    );
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

pub fn encode_ply_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    )
    .into_bytes();
    for v in mesh.vertices() {
        for c in v {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::cube;

    #[test]
    fn ascii_and_binary_roundtrip() {
        let m = cube();
        let a = parse_ply(encode_ply_ascii(&m).as_bytes()).unwrap();
        assert_eq!(a, m);
        let b = parse_ply(&encode_ply_binary(&m)).unwrap();
        assert_eq!(b.faces(), m.faces());
        assert!((b.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn extra_properties_and_quads() {
        let src = "ply\nformat ascii 1.0\ncomment x\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_index\nproperty int flags\nend_header\n0 0 0 9\n1 0 0 9\n1 1 0 9\n0 1 0 9\n4 0 1 2 3 7\n";
        let m = parse_ply(src.as_bytes()).unwrap();
        assert_eq!(m.faces().len(), 2);
        assert_eq!(m.total_area(), 1.0);
    }

    #[test]
    fn truncation_and_bad_headers() {
        let bin = encode_ply_binary(&cube());
        let err = parse_ply(&bin[..bin.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("byte"), "{err}");
        let text = encode_ply_ascii(&cube());
        assert!(parse_ply(text[..text.len() - 10].as_bytes()).is_err());
        assert!(parse_ply(b"ply\nformat binary_big_endian 1.0\nend_header\n").is_err());
        assert!(parse_ply(b"plx\n").is_err());
    }
}
