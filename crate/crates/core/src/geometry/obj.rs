use std::fmt::Write;

use super::mesh::{fan, TriangleMesh};
use crate::error::{Error, Result};
use crate::pointvoxel::Point;

fn utf8(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| Error::parse_offset(e.valid_up_to(), "invalid UTF-8"))
}

fn resolve(token: &str, count: usize, line: usize) -> Result<usize> {
    let raw = token.split('/').next().unwrap_or("");
    let idx: i64 = raw
        .parse()
        .map_err(|_| Error::parse_line(line, format!("bad face index {token:?}")))?;
    let resolved = if idx > 0 {
        idx - 1
    } else if idx < 0 {
        count as i64 + idx
    } else {
        return Err(Error::parse_line(line, "face index 0 is invalid"));
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(Error::parse_line(
            line,
            format!("face index {idx} out of range for {count} vertices"),
        ));
    }
    Ok(resolved as usize)
}

/// Parse Wavefront OBJ. Polygons are fan-triangulated; texture and normal
/// references in face tokens are ignored, as are unknown statements.
pub fn parse_obj(bytes: &[u8]) -> Result<TriangleMesh> {
    let text = utf8(bytes)?;
    let mut vertices: Vec<Point> = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut p: Point = [0.0; 3];
                for c in &mut p {
                    let t = tok
                        .next()
                        .ok_or_else(|| Error::parse_line(line_no, "vertex needs three coordinates"))?;
                    *c = t
                        .parse()
                        .map_err(|_| Error::parse_line(line_no, format!("bad coordinate {t:?}")))?;
                    if !c.is_finite() {
                        return Err(Error::parse_line(line_no, "non-finite coordinate"));
                    }
                }
                vertices.push(p);
            }
            Some("f") => {
                let poly = tok
                    .map(|t| resolve(t, vertices.len(), line_no))
                    .collect::<Result<Vec<_>>>()?;
                if poly.len() < 3 {
                    return Err(Error::parse_line(line_no, "face needs at least three vertices"));
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(Error::parse_line(text.lines().count().max(1), "no faces in file"));
    }
    TriangleMesh::new(vertices, faces)
}

pub fn encode_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_and_negative_indices() {
        let src = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf -4//1 -3//1 -2//1 -1//1\n";
        let m = parse_obj(src.as_bytes()).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.total_area(), 1.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1\nf 1 2 3\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_obj(b"v 0 0 0\nf 1 2 3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_obj(b"v 0 0 0\n").is_err());
        assert!(parse_obj(&[0xff, 0xfe]).is_err());
    }
}
