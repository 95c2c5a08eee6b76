use std::path::Path;

use log::warn;

use super::{Face, Mesh, MeshError, Vec2, Vec3};

/// Load a Wavefront OBJ file. Polygons are fan-triangulated; normals are
/// recomputed from geometry unless every corner references a `vn`.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_obj(&text)
}

/// Serialize as OBJ text. Faces reference `v/vt/vn` when the mesh has UVs,
/// `v//vn` otherwise.
pub fn obj_text(mesh: &Mesh, mtllib: Option<(&str, &str)>) -> String {
    use std::fmt::Write as _;
    let mut obj = String::with_capacity(64 * (mesh.positions.len() + mesh.uvs.len() + mesh.faces.len()));
    if let Some((lib, _)) = mtllib {
        let _ = writeln!(obj, "mtllib {lib}");
    }
    for p in &mesh.positions {
        let _ = writeln!(obj, "v {} {} {}", p.x, p.y, p.z);
    }
    for t in &mesh.uvs {
        let _ = writeln!(obj, "vt {} {}", t.x, t.y);
    }
    for n in &mesh.normals {
        let _ = writeln!(obj, "vn {} {} {}", n.x, n.y, n.z);
    }
    if let Some((_, material)) = mtllib {
        let _ = writeln!(obj, "usemtl {material}");
    }
    let uv = mesh.has_uvs();
    for f in &mesh.faces {
        obj.push('f');
        for k in 0..3 {
            if uv {
                let _ = write!(obj, " {}/{}/{}", f.position[k] + 1, f.uv[k] + 1, f.normal[k] + 1);
            } else {
                let _ = write!(obj, " {}//{}", f.position[k] + 1, f.normal[k] + 1);
            }
        }
        obj.push('\n');
    }
    obj
}

pub fn save_obj(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    std::fs::write(path, obj_text(mesh, None)).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Clone, Copy)]
struct Corner {
    v: u32,
    vt: Option<u32>,
    vn: Option<u32>,
}

fn resolve(raw: &str, count: usize, line: usize, what: &str) -> Result<u32, MeshError> {
    let err = |message: String| MeshError::Parse { line, message };
    let idx: i64 = raw.parse().map_err(|_| err(format!("bad {what} index '{raw}'")))?;
    let resolved = match idx {
        0 => return Err(err(format!("{what} index 0 is invalid (indices are 1-based)"))),
        i if i > 0 => i - 1,
        i => count as i64 + i,
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(err(format!("{what} index {idx} out of range (have {count})")));
    }
    Ok(resolved as u32)
}

fn floats<const N: usize>(parts: &[&str], line: usize, record: &str) -> Result<[f64; N], MeshError> {
    if parts.len() < N {
        return Err(MeshError::Parse {
            line,
            message: format!("'{record}' needs {N} coordinates, got {}", parts.len()),
        });
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| MeshError::Parse {
            line,
            message: format!("bad number '{p}' in '{record}' record"),
        })?;
    }
    Ok(out)
}

pub fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    let mut polys: Vec<(usize, Vec<Corner>)> = Vec::new();

    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => {
                let [x, y, z] = floats::<3>(&rest, line, "v")?;
                positions.push(Vec3::new(x, y, z));
            }
            "vn" => {
                let [x, y, z] = floats::<3>(&rest, line, "vn")?;
                let n = Vec3::new(x, y, z);
                let len = n.norm();
                normals.push(if len > 0.0 { n / len } else { n });
            }
            "vt" => {
                let [u, v] = floats::<2>(&rest, line, "vt")?;
                uvs.push(Vec2::new(u, v));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("face needs at least 3 corners, got {}", rest.len()),
                    });
                }
                let mut corners = Vec::with_capacity(rest.len());
                for token in rest {
                    let mut fields = token.split('/');
                    let v = resolve(fields.next().unwrap_or(""), positions.len(), line, "vertex")?;
                    let vt = match fields.next() {
                        Some("") | None => None,
                        Some(s) => Some(resolve(s, uvs.len(), line, "texcoord")?),
                    };
                    let vn = match fields.next() {
                        Some("") | None => None,
                        Some(s) => Some(resolve(s, normals.len(), line, "normal")?),
                    };
                    corners.push(Corner { v, vt, vn });
                }
                polys.push((line, corners));
            }
            // groups, materials, smoothing and free-form records carry nothing we use
            _ => {}
        }
    }

    let all_uv = polys.iter().all(|(_, c)| c.iter().all(|k| k.vt.is_some()));
    let all_vn = polys.iter().all(|(_, c)| c.iter().all(|k| k.vn.is_some()));
    if !all_uv && polys.iter().any(|(_, c)| c.iter().any(|k| k.vt.is_some())) {
        warn!("some faces lack texture coordinates; discarding all UVs");
    }

    let mut faces = Vec::new();
    let mut dropped = 0usize;
    for (_, corners) in &polys {
        for k in 1..corners.len() - 1 {
            let tri = [corners[0], corners[k], corners[k + 1]];
            let [a, b, c] = tri.map(|t| t.v);
            if a == b || b == c || a == c {
                dropped += 1;
                continue;
            }
            faces.push(Face {
                position: [a, b, c],
                normal: tri.map(|t| t.vn.unwrap_or(0)),
                uv: tri.map(|t| t.vt.unwrap_or(0)),
            });
        }
    }
    if dropped > 0 {
        warn!("dropped {dropped} triangles with repeated vertex indices");
    }
    if faces.is_empty() {
        return Err(MeshError::NoFaces);
    }

    let mut mesh = Mesh {
        positions,
        normals,
        uvs: if all_uv { uvs } else { Vec::new() },
        faces,
        island_ids: Vec::new(),
    };
    if !all_vn {
        mesh.recompute_normals();
    }
    let degenerate = (0..mesh.faces.len())
        .filter(|&f| {
            let [a, b, c] = mesh.face_positions(f);
            (b - a).cross(&(c - a)).norm_squared() == 0.0
        })
        .count();
    if degenerate > 0 {
        warn!("{degenerate} zero-area triangles retained");
    }
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = "\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
";

    #[test]
    fn cube_quads_become_twelve_triangles() {
        let m = parse_obj(CUBE).unwrap();
        assert_eq!(m.faces.len(), 12);
        assert_eq!(m.positions.len(), 8);
        assert!(!m.has_uvs());
        // recomputed normals are unit length
        for n in &m.normals {
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_vt_reports_no_uvs() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert!(!m.has_uvs());
        let report = crate::mesh::validate_uv_layout(&m);
        assert!(!report.has_uvs);
    }

    #[test]
    fn degenerate_triangle_is_retained() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\n").unwrap();
        assert_eq!(m.faces.len(), 2);
    }

    #[test]
    fn full_corner_syntax_and_negative_indices() {
        let text = "\
v 0 0 0
v 1 0 0
v 0 1 0
vt 0 0
vt 1 0
vt 0 1
vn 0 0 2
f -3/-3/-1 -2/-2/-1 -1/-1/-1
";
        let m = parse_obj(text).unwrap();
        assert!(m.has_uvs());
        assert_eq!(m.faces[0].position, [0, 1, 2]);
        assert_eq!(m.faces[0].uv, [0, 1, 2]);
        assert_eq!(m.faces[0].normal, [0, 0, 0]);
        assert_eq!(m.normals[0], Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn normal_only_corner_syntax() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n").unwrap();
        assert!(!m.has_uvs());
        assert_eq!(m.faces[0].normal, [0, 0, 0]);
    }

    #[test]
    fn parse_error_reports_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 zero\nf 1 2 3\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 3, .. }), "{err}");
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 7\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn no_faces_is_an_error() {
        assert!(matches!(parse_obj("v 0 0 0\n"), Err(MeshError::NoFaces)));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_mesh("/nonexistent/mesh.obj"), Err(MeshError::Io { .. })));
    }
}
