//! ASCII Wavefront OBJ, triangles only.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::{Mesh, MeshError};
use crate::scalar::Scalar;

pub fn load_mesh<T: Scalar>(path: impl AsRef<Path>) -> Result<Mesh<T>, MeshError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            MeshError::MissingFile(path.display().to_string())
        } else {
            MeshError::Io {
                path: path.display().to_string(),
                source,
            }
        }
    })?;
    parse_obj(&text)
}

pub(crate) fn parse_obj<T: Scalar>(text: &str) -> Result<Mesh<T>, MeshError> {
    let mut vertices = Vec::new();
    // (line number, raw indices); resolved once all vertices are known
    let mut raw_faces: Vec<(usize, [i64; 3])> = Vec::new();

    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [T::zero(); 3];
                for c in p.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| MeshError::Parse {
                        line: line_no,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    let value: f64 = tok.parse().map_err(|_| MeshError::Parse {
                        line: line_no,
                        message: format!("bad coordinate {tok:?}"),
                    })?;
                    *c = T::from_f64_rounded(value);
                }
                vertices.push(p);
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(MeshError::NonTriangularFace {
                        line: line_no,
                        count: refs.len(),
                    });
                }
                let mut face = [0i64; 3];
                for (slot, r) in face.iter_mut().zip(&refs) {
                    let head = r.split('/').next().unwrap_or("");
                    *slot = head.parse().map_err(|_| MeshError::Parse {
                        line: line_no,
                        message: format!("bad face index {r:?}"),
                    })?;
                }
                raw_faces.push((line_no, face));
            }
            _ => {}
        }
    }

    let n = vertices.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (line, raw) in raw_faces {
        let mut face = [0usize; 3];
        for (slot, &index) in face.iter_mut().zip(&raw) {
            // OBJ is 1-based; negative indices count back from the last vertex
            let resolved = if index > 0 {
                index - 1
            } else {
                n as i64 + index
            };
            if index == 0 || resolved < 0 || resolved >= n as i64 {
                return Err(MeshError::IndexOutOfRange {
                    line,
                    index,
                    num_vertices: n,
                });
            }
            *slot = resolved as usize;
        }
        faces.push(face);
    }
    Mesh::new(vertices, faces)
}

pub fn save_mesh<T: Scalar>(mesh: &Mesh<T>, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    let io_err = |source| MeshError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    write_obj(mesh, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Writes OBJ text. Coordinates use enough digits to round-trip exactly.
pub fn write_obj<T: Scalar, W: Write>(mesh: &Mesh<T>, out: &mut W) -> io::Result<()> {
    let digits = if T::DTYPE == "f32" { 8 } else { 16 };
    writeln!(out, "# template {}", mesh.template_id())?;
    for p in mesh.vertices() {
        writeln!(
            out,
            "v {:.*e} {:.*e} {:.*e}",
            digits,
            p[0].to_f64_lossless(),
            digits,
            p[1].to_f64_lossless(),
            digits,
            p[2].to_f64_lossless()
        )?;
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}
