//! Bake geometry channels into UV space.
//!
//! Texel (i, j) samples UV (i + 0.5, j + 0.5) / res with row 0 at the top
//! (v = 1). Backprojection, completion and export use the same convention.

use log::warn;
use thiserror::Error;

use crate::image::{self, DecodedPng, Depth, Image, ImageIoError, Rgb};
use crate::mesh::{Mesh, Vec3};
use crate::raster::{encode_normal, interpolate_normal, interpolate_position, tri, uv_setups, PassKind, BACKGROUND};

#[derive(Debug, Error)]
pub enum BakeError {
    #[error("mesh has no UV coordinates")]
    MissingUvs,
    #[error("UV layout overlaps: {texels} texels claimed more than once")]
    OverlappingLayout { texels: usize },
    #[error("cannot bake a {0:?} pass; only position and normal are geometric")]
    UnsupportedKind(PassKind),
    #[error("resolution must be positive")]
    ZeroResolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UvKind {
    Position,
    Normal,
    Color,
}

/// A square UV-space image. Unmapped texels hold [`BACKGROUND`] until a
/// dilation pass fills the gutter.
#[derive(Clone, Debug, PartialEq)]
pub struct UvImage {
    pub kind: UvKind,
    pub color: Image,
    pub mapped: Vec<bool>,
}

impl UvImage {
    pub fn resolution(&self) -> usize {
        self.color.width
    }

    pub fn png_depth(&self) -> Depth {
        match self.kind {
            UvKind::Color => Depth::Eight,
            _ => Depth::Sixteen,
        }
    }

    /// PNG with the mapped flag in alpha.
    pub fn encode_png(&self) -> Result<Vec<u8>, ImageIoError> {
        image::encode_png(&self.color, Some(&self.mapped), self.png_depth())
    }

    pub fn from_png(decoded: DecodedPng, kind: UvKind) -> UvImage {
        let mapped = decoded.alpha.unwrap_or_else(|| vec![true; decoded.image.data.len()]);
        UvImage {
            kind,
            color: decoded.image,
            mapped,
        }
    }

    pub fn mapped_fraction(&self) -> f64 {
        self.mapped.iter().filter(|&&m| m).count() as f64 / self.mapped.len().max(1) as f64
    }
}

/// Which face covers each texel center, with affine barycentrics.
#[derive(Clone, Debug)]
pub struct UvRaster {
    pub resolution: usize,
    pub texels: Vec<Option<(u32, [f64; 3])>>,
    pub degenerate_faces: usize,
}

#[derive(Clone, Copy)]
struct Claim {
    face: u32,
    bary: [f64; 3],
    count: u8,
}

/// Rasterize the UV layout; a texel claimed by two triangles is an error.
pub fn rasterize_uv(mesh: &Mesh, resolution: usize) -> Result<UvRaster, BakeError> {
    if !mesh.has_uvs() {
        return Err(BakeError::MissingUvs);
    }
    if resolution == 0 {
        return Err(BakeError::ZeroResolution);
    }
    let setups = uv_setups(mesh, resolution);
    let degenerate_faces = mesh.degenerate_uv_faces();
    if degenerate_faces > 0 {
        warn!("{degenerate_faces} zero-area UV triangles skipped");
    }
    let mut claims = vec![
        Claim {
            face: u32::MAX,
            bary: [0.0; 3],
            count: 0
        };
        resolution * resolution
    ];
    tri::rasterize(&setups, resolution, resolution, &mut claims, |c, t, b| {
        if c.count == 0 {
            c.face = t as u32;
            c.bary = b;
        }
        c.count = c.count.saturating_add(1);
    });
    let overlapping = claims.iter().filter(|c| c.count > 1).count();
    if overlapping > 0 {
        return Err(BakeError::OverlappingLayout { texels: overlapping });
    }
    Ok(UvRaster {
        resolution,
        texels: claims.into_iter().map(|c| (c.count == 1).then_some((c.face, c.bary))).collect(),
        degenerate_faces,
    })
}

/// Bake any per-surface-point function `f(position, unit normal)` into UV space.
pub fn bake_with(mesh: &Mesh, raster: &UvRaster, kind: UvKind, f: impl Fn(&Vec3, &Vec3) -> Rgb) -> UvImage {
    let res = raster.resolution;
    let mut color = Image::filled(res, res, BACKGROUND);
    let mut mapped = vec![false; res * res];
    for (i, texel) in raster.texels.iter().enumerate() {
        if let Some((face, bary)) = *texel {
            let p = interpolate_position(mesh, face as usize, bary);
            let n = interpolate_normal(mesh, face as usize, bary);
            color.data[i] = f(&p, &n);
            mapped[i] = true;
        }
    }
    UvImage { kind, color, mapped }
}

/// Bake world position (already in [0,1]^3) or encoded normal per texel.
pub fn bake_pass(mesh: &Mesh, kind: PassKind, resolution: usize) -> Result<UvImage, BakeError> {
    let raster = rasterize_uv(mesh, resolution)?;
    bake_from_raster(mesh, &raster, kind)
}

pub fn bake_from_raster(mesh: &Mesh, raster: &UvRaster, kind: PassKind) -> Result<UvImage, BakeError> {
    Ok(match kind {
        PassKind::Position => bake_with(mesh, raster, UvKind::Position, |p, _| [p.x as f32, p.y as f32, p.z as f32]),
        PassKind::Normal => bake_with(mesh, raster, UvKind::Normal, |_, n| encode_normal(n)),
        PassKind::Combined => return Err(BakeError::UnsupportedKind(kind)),
    })
}

/// Texels covered by some UV triangle.
pub fn compute_coverage_mask(mesh: &Mesh, resolution: usize) -> Result<Vec<bool>, BakeError> {
    let raster = rasterize_uv(mesh, resolution)?;
    Ok(raster.texels.iter().map(Option::is_some).collect())
}
