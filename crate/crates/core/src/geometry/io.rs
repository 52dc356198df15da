//! ASCII OFF / OBJ triangle meshes.

use std::fmt::Write as _;
use std::path::Path;

use super::{SurfaceGeometry, V3};
use crate::error::{GlError, Result};

pub fn load(path: &Path) -> Result<SurfaceGeometry> {
    let text = std::fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let (v, f) = match ext.as_str() {
        "off" => parse_off(&text)?,
        "obj" => parse_obj(&text)?,
        other => return Err(GlError::Parse(format!("unsupported mesh extension '{other}'"))),
    };
    SurfaceGeometry::from_mesh(v, f, None)
}

type Raw = (Vec<V3>, Vec<[usize; 3]>);

fn num<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| GlError::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| GlError::Parse(format!("bad {what}")))
}

pub fn parse_off(text: &str) -> Result<Raw> {
    let mut toks = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace());
    let head = toks.next().ok_or_else(|| GlError::Parse("empty OFF file".into()))?;
    let nv: usize = if head == "OFF" { num(toks.next(), "vertex count")? } else {
        // some writers glue counts onto the header line
        head.strip_prefix("OFF")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| GlError::Parse("missing OFF header".into()))?
            .parse()
            .map_err(|_| GlError::Parse("bad vertex count".into()))?
    };
    let nf: usize = num(toks.next(), "face count")?;
    let _ne: usize = num(toks.next(), "edge count")?;
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = num(toks.next(), "coordinate")?;
        let y = num(toks.next(), "coordinate")?;
        let z = num(toks.next(), "coordinate")?;
        verts.push(V3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let k: usize = num(toks.next(), "face size")?;
        if k != 3 {
            return Err(GlError::Parse(format!("face {f} has {k} vertices; triangles only")));
        }
        faces.push([
            num(toks.next(), "index")?,
            num(toks.next(), "index")?,
            num(toks.next(), "index")?,
        ]);
    }
    Ok((verts, faces))
}

pub fn parse_obj(text: &str) -> Result<Raw> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let x = num(it.next(), "coordinate")?;
                let y = num(it.next(), "coordinate")?;
                let z = num(it.next(), "coordinate")?;
                verts.push(V3::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<&str> = it.collect();
                if idx.len() != 3 {
                    return Err(GlError::Parse(format!(
                        "line {}: {} face vertices; triangles only",
                        ln + 1,
                        idx.len()
                    )));
                }
                let mut t = [0usize; 3];
                for (k, s) in idx.iter().enumerate() {
                    let first = s.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| GlError::Parse(format!("line {}: bad index", ln + 1)))?;
                    let i = if i < 0 { verts.len() as i64 + i } else { i - 1 };
                    if i < 0 {
                        return Err(GlError::Parse(format!("line {}: bad index", ln + 1)));
                    }
                    t[k] = i as usize;
                }
                faces.push(t);
            }
            _ => {}
        }
    }
    Ok((verts, faces))
}

pub fn to_off(g: &SurfaceGeometry) -> String {
    let mut s = String::new();
    writeln!(s, "OFF\n{} {} {}", g.n_vertices(), g.n_faces(), g.n_edges()).unwrap();
    for v in &g.vertices {
        writeln!(s, "{:.17e} {:.17e} {:.17e}", v.x, v.y, v.z).unwrap();
    }
    for t in &g.faces {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    s
}

pub fn to_obj(g: &SurfaceGeometry) -> String {
    let mut s = String::new();
    for v in &g.vertices {
        writeln!(s, "v {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z).unwrap();
    }
    for t in &g.faces {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::builders::icosphere;
    use super::*;

    #[test]
    fn off_roundtrip() {
        let g = icosphere(2, 1.0).unwrap();
        let (v, f) = parse_off(&to_off(&g)).unwrap();
        assert_eq!(f, g.faces);
        assert!(v.iter().zip(&g.vertices).all(|(a, b)| (a - b).norm() == 0.0));
    }

    #[test]
    fn obj_roundtrip() {
        let g = icosphere(1, 1.0).unwrap();
        let (v, f) = parse_obj(&to_obj(&g)).unwrap();
        assert_eq!(f, g.faces);
        assert_eq!(v.len(), g.n_vertices());
    }

    #[test]
    fn quads_rejected() {
        let text = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(parse_off(text).is_err());
    }
}
