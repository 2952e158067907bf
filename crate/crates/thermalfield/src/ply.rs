//! ASCII PLY meshes.
//!
//! Coordinates are printed with Rust's shortest round-trip formatting, so a
//! written mesh reads back bit-identical.

use std::fmt::Write as _;
use std::path::Path;

use thermalfield_core::mesh::TriangleMesh;
use thermalfield_core::Vec3;

use crate::error::{read, write, Error, Result};

/// Name of the optional per-vertex property.
pub const SCALAR_PROPERTY: &str = "thermal";

pub fn encode_ply(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", mesh.vertices.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.scalars.is_some() {
        let _ = writeln!(out, "property double {SCALAR_PROPERTY}");
    }
    let _ = writeln!(out, "element face {}", mesh.triangles.len());
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, v) in mesh.vertices.iter().enumerate() {
        let _ = write!(out, "{} {} {}", v.x, v.y, v.z);
        if let Some(s) = &mesh.scalars {
            let _ = write!(out, " {}", s[i]);
        }
        out.push('\n');
    }
    for [a, b, c] in &mesh.triangles {
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    out
}

pub fn decode_ply(text: &str) -> std::result::Result<TriangleMesh, String> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| {
        lines
            .next()
            .map(|(n, l)| (n + 1, l.trim()))
            .ok_or_else(|| format!("unexpected end of file, expected {what}"))
    };
    if next("magic")?.1 != "ply" {
        return Err("line 1: missing 'ply' magic".into());
    }
    let (n, fmt) = next("format")?;
    if fmt != "format ascii 1.0" {
        return Err(format!("line {n}: only 'format ascii 1.0' is supported"));
    }
    let mut vertex_count = None;
    let mut face_count = None;
    let mut vertex_props = Vec::new();
    let mut current = "";
    loop {
        let (n, line) = next("end_header")?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", c] => {
                vertex_count = Some(c.parse::<usize>().map_err(|e| format!("line {n}: {e}"))?);
                current = "vertex";
            }
            ["element", "face", c] => {
                face_count = Some(c.parse::<usize>().map_err(|e| format!("line {n}: {e}"))?);
                current = "face";
            }
            ["property", "list", ..] if current == "face" => {}
            ["property", _, name] if current == "vertex" => vertex_props.push(name.to_string()),
            _ => return Err(format!("line {n}: unsupported header line '{line}'")),
        }
    }
    let pos = |name: &str| vertex_props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (pos("x"), pos("y"), pos("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err("vertex element lacks x/y/z properties".into()),
    };
    let is = pos(SCALAR_PROPERTY);
    let mut mesh = TriangleMesh {
        scalars: is.map(|_| Vec::new()),
        ..TriangleMesh::default()
    };
    for _ in 0..vertex_count.unwrap_or(0) {
        let (n, line) = next("vertex")?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("line {n}: {e}"))?;
        if vals.len() != vertex_props.len() {
            return Err(format!("line {n}: expected {} values", vertex_props.len()));
        }
        mesh.vertices.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
        if let (Some(i), Some(s)) = (is, mesh.scalars.as_mut()) {
            s.push(vals[i]);
        }
    }
    for _ in 0..face_count.unwrap_or(0) {
        let (n, line) = next("face")?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("line {n}: {e}"))?;
        match idx.as_slice() {
            [3, a, b, c] => mesh.triangles.push([*a, *b, *c]),
            _ => return Err(format!("line {n}: only triangles are supported")),
        }
    }
    mesh.validate().map_err(|e| e.to_string())?;
    Ok(mesh)
}

pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write(path, encode_ply(mesh).as_bytes())
}

pub fn read_ply(path: &Path) -> Result<TriangleMesh> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    decode_ply(text).map_err(|m| Error::format(path, m))
}
