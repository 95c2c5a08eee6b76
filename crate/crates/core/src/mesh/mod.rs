//! Triangle meshes: OBJ ingest, normalization into the unit cube and the
//! single non-overlapping UV layout every later stage relies on.

mod obj;
pub mod primitives;
mod uv;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

pub use obj::{load_mesh, obj_text, parse_obj, save_obj};
pub use uv::{
    detect_islands, fallback_unwrap, repack_uv_islands, validate_uv_layout, validate_uv_layout_at, UvLayoutReport,
    DEFAULT_MARGIN_TEXELS, REFERENCE_RESOLUTION,
};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no faces")]
    NoFaces,
    #[error("mesh has no vertices")]
    NoVertices,
    #[error("face {face}: {message}")]
    InvalidFace { face: usize, message: String },
    #[error("all vertices coincide; cannot normalize a zero-extent mesh")]
    ZeroExtent,
    #[error("mesh has no UV coordinates")]
    MissingUvs,
    #[error("island packing failed: {0}")]
    PackingFailed(String),
}

/// One triangle. Position, normal and UV streams are indexed separately, as
/// in OBJ. `uv` is meaningless when the mesh carries no UVs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub position: [u32; 3],
    pub normal: [u32; 3],
    pub uv: [u32; 3],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub uvs: Vec<Vec2>,
    pub faces: Vec<Face>,
    /// Per-face island label; empty until islands are detected or assigned.
    pub island_ids: Vec<u32>,
}

impl Mesh {
    pub fn has_uvs(&self) -> bool {
        !self.uvs.is_empty()
    }

    pub fn face_positions(&self, f: usize) -> [Vec3; 3] {
        let idx = self.faces[f].position;
        idx.map(|i| self.positions[i as usize])
    }

    pub fn face_normals(&self, f: usize) -> [Vec3; 3] {
        let idx = self.faces[f].normal;
        idx.map(|i| self.normals[i as usize])
    }

    pub fn face_uvs(&self, f: usize) -> [Vec2; 3] {
        let idx = self.faces[f].uv;
        idx.map(|i| self.uvs[i as usize])
    }

    pub fn island_count(&self) -> usize {
        self.island_ids.iter().copied().max().map_or(0, |m| m as usize + 1)
    }

    /// Check index ranges and distinct corners.
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.faces.is_empty() {
            return Err(MeshError::NoFaces);
        }
        let bad = |face, message: &str| MeshError::InvalidFace {
            face,
            message: message.to_string(),
        };
        for (i, f) in self.faces.iter().enumerate() {
            if f.position.iter().any(|&p| p as usize >= self.positions.len()) {
                return Err(bad(i, "position index out of range"));
            }
            if f.normal.iter().any(|&n| n as usize >= self.normals.len()) {
                return Err(bad(i, "normal index out of range"));
            }
            if self.has_uvs() && f.uv.iter().any(|&t| t as usize >= self.uvs.len()) {
                return Err(bad(i, "uv index out of range"));
            }
            let [a, b, c] = f.position;
            if a == b || b == c || a == c {
                return Err(bad(i, "repeated position index"));
            }
        }
        if !self.island_ids.is_empty() && self.island_ids.len() != self.faces.len() {
            return Err(bad(0, "island label count differs from face count"));
        }
        Ok(())
    }

    /// Axis-aligned bounds of the positions.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    /// Area-weighted vertex normals, one per position, indexed like positions.
    pub fn recompute_normals(&mut self) {
        let mut acc = vec![Vec3::zeros(); self.positions.len()];
        for f in &mut self.faces {
            let [a, b, c] = f.position.map(|i| self.positions[i as usize]);
            let n = (b - a).cross(&(c - a));
            for &i in &f.position {
                acc[i as usize] += n;
            }
            f.normal = f.position;
        }
        self.normals = acc
            .into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vec3::z()
                }
            })
            .collect();
    }

    /// Number of faces whose UV triangle has zero area.
    pub fn degenerate_uv_faces(&self) -> usize {
        if !self.has_uvs() {
            return 0;
        }
        (0..self.faces.len())
            .filter(|&f| {
                let [a, b, c] = self.face_uvs(f);
                let e1 = b - a;
                let e2 = c - a;
                e1.x * e2.y - e1.y * e2.x == 0.0
            })
            .count()
    }
}

/// Translate and uniformly scale positions so the bounding cube (side = the
/// longest bounding-box extent, centered on the box center) maps to [0,1]^3.
pub fn normalize_mesh(mut mesh: Mesh) -> Result<Mesh, MeshError> {
    let (lo, hi) = mesh.bounds().ok_or(MeshError::NoVertices)?;
    let extent = (hi - lo).max();
    if !(extent > 0.0) {
        return Err(MeshError::ZeroExtent);
    }
    let center = (lo + hi) * 0.5;
    let half = Vec3::repeat(0.5);
    for p in &mut mesh.positions {
        let q = (*p - center) / extent + half;
        // rounding can leave the extreme coordinates an ulp outside the cube
        *p = q.map(|c| c.clamp(0.0, 1.0));
    }
    Ok(mesh)
}
