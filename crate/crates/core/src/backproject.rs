//! Project generated views back into UV space and fuse them.
//!
//! Every covered view pixel is traced to its surface point through the
//! rasterizer's own visibility buffer, weighted by the cosine of its
//! incidence angle raised to `alpha`, and splatted into the nearest texel.
//! The blended texel color is the weighted sum divided by the weight sum
//! plus a small epsilon; `alpha = 0` reduces this to a plain mean.

use thiserror::Error;

use crate::image::{self, Image, ImageIoError};
use crate::mesh::{Mesh, Vec3};
use crate::par;
use crate::raster::{interpolate_normal, interpolate_position, interpolate_uv, rasterize_view, Camera, PassImage, Visibility, BACKGROUND};

pub const DEFAULT_ALPHA: f64 = 6.0;
pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_N_VIEWS: usize = 4;
/// Texels whose accumulated weight stays below this are left for inpainting.
pub const WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BlendError {
    #[error("incidence needs unit vectors (|view| = {view}, |normal| = {normal})")]
    NonUnitVector { view: f64, normal: f64 },
    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),
    #[error("invalid blend parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BlendParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub n_views: usize,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            n_views: DEFAULT_N_VIEWS,
        }
    }
}

impl BlendParams {
    pub fn validate(&self) -> Result<(), BlendError> {
        if !(self.alpha >= 0.0) {
            return Err(BlendError::InvalidParams(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0) {
            return Err(BlendError::InvalidParams(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.n_views == 0 {
            return Err(BlendError::InvalidParams("n_views must be >= 1".into()));
        }
        Ok(())
    }
}

/// Cosine of the angle between the surface-to-camera direction and the
/// outward normal, clamped at 0 so back-facing samples carry no weight.
pub fn incidence(view_dir: &Vec3, normal: &Vec3) -> Result<f64, BlendError> {
    let (lv, ln) = (view_dir.norm(), normal.norm());
    if (lv - 1.0).abs() > 1e-6 || (ln - 1.0).abs() > 1e-6 {
        return Err(BlendError::NonUnitVector { view: lv, normal: ln });
    }
    Ok(view_dir.dot(normal).clamp(0.0, 1.0))
}

/// Per-texel accumulators in UV space.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialTexture {
    pub resolution: usize,
    pub color_accum: Vec<[f64; 3]>,
    pub weight_accum: Vec<f64>,
    /// Filled by [`blend_views`].
    pub resolved: Option<Vec<[f64; 3]>>,
}

impl PartialTexture {
    pub fn new(resolution: usize) -> Self {
        let n = resolution * resolution;
        Self {
            resolution,
            color_accum: vec![[0.0; 3]; n],
            weight_accum: vec![0.0; n],
            resolved: None,
        }
    }

    #[inline]
    pub fn splat(&mut self, texel: usize, color: [f64; 3], weight: f64) {
        let acc = &mut self.color_accum[texel];
        for k in 0..3 {
            acc[k] += weight * color[k];
        }
        self.weight_accum[texel] += weight;
    }

    /// Add another accumulator texel-wise.
    pub fn merge(&mut self, other: &PartialTexture) -> Result<(), BlendError> {
        if other.resolution != self.resolution {
            return Err(BlendError::ResolutionMismatch(format!(
                "cannot merge {} into {}",
                other.resolution, self.resolution
            )));
        }
        for (a, b) in self.color_accum.iter_mut().zip(&other.color_accum) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
        for (a, b) in self.weight_accum.iter_mut().zip(&other.weight_accum) {
            *a += b;
        }
        self.resolved = None;
        Ok(())
    }

    pub fn painted(&self) -> Vec<bool> {
        self.weight_accum.iter().map(|&w| w >= WEIGHT_FLOOR).collect()
    }

    /// Resolved colors as an image; background before blending.
    pub fn resolved_image(&self) -> Image {
        let mut img = Image::filled(self.resolution, self.resolution, BACKGROUND);
        if let Some(r) = &self.resolved {
            for (d, s) in img.data.iter_mut().zip(r) {
                *d = s.map(|c| c as f32);
            }
        }
        img
    }

    pub fn encode_resolved_png(&self) -> Result<Vec<u8>, ImageIoError> {
        image::encode_png(&self.resolved_image(), Some(&self.painted()), image::Depth::Eight)
    }

    /// Weights scaled so the largest maps to full white.
    pub fn encode_weight_png(&self) -> Result<Vec<u8>, ImageIoError> {
        let max = self.weight_accum.iter().cloned().fold(0.0, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
        image::encode_gray16_png(self.resolution, self.resolution, &self.weight_accum, scale)
    }
}

/// Texel index under a UV point: nearest texel, clamped to the atlas.
#[inline]
fn texel_of(u: f64, v: f64, res: usize) -> usize {
    let r = res as f64;
    let x = (u * r).floor().clamp(0.0, r - 1.0) as usize;
    let y = ((1.0 - v) * r).floor().clamp(0.0, r - 1.0) as usize;
    y * res + x
}

/// Splat one generated view into `accum`. `vis` must be the rasterizer's
/// solution for `camera` on `mesh`; pixels it does not cover, or whose
/// incidence is zero, contribute nothing.
pub fn backproject_view(
    mesh: &Mesh,
    camera: &Camera,
    vis: &Visibility,
    view_color: &PassImage,
    accum: &mut PartialTexture,
    params: &BlendParams,
) -> Result<(), BlendError> {
    params.validate()?;
    if vis.size != camera.image_size || view_color.size() != camera.image_size || view_color.color.height != camera.image_size {
        return Err(BlendError::ResolutionMismatch(format!(
            "camera {} px, visibility {} px, view {}x{} px",
            camera.image_size,
            vis.size,
            view_color.color.width,
            view_color.color.height
        )));
    }
    if !mesh.has_uvs() {
        return Err(BlendError::InvalidParams("mesh has no UVs to project into".into()));
    }
    let eye = camera.eye();
    let res = accum.resolution;
    for (i, frag) in vis.fragments.iter().enumerate() {
        if !frag.is_covered() || !view_color.coverage[i] {
            continue;
        }
        let f = frag.face as usize;
        let p = interpolate_position(mesh, f, frag.bary);
        let n = interpolate_normal(mesh, f, frag.bary);
        let to_eye = (eye - p).normalize();
        let phi = incidence(&to_eye, &n)?;
        if phi <= 0.0 {
            continue;
        }
        let w = phi.powf(params.alpha);
        let uv = interpolate_uv(mesh, f, frag.bary);
        let c = view_color.color.data[i];
        accum.splat(texel_of(uv.x, uv.y, res), [c[0] as f64, c[1] as f64, c[2] as f64], w);
    }
    Ok(())
}

/// Backproject every view into its own accumulator, then sum them in view
/// order. The result is the same for any thread count.
pub fn backproject_views(
    mesh: &Mesh,
    cameras: &[Camera],
    views: &[PassImage],
    resolution: usize,
    params: &BlendParams,
) -> Result<PartialTexture, BlendError> {
    if cameras.len() != views.len() {
        return Err(BlendError::InvalidParams(format!("{} cameras for {} views", cameras.len(), views.len())));
    }
    if views.len() != params.n_views {
        return Err(BlendError::InvalidParams(format!("expected {} views, got {}", params.n_views, views.len())));
    }
    let parts = par::map_indices(views.len(), |k| {
        let vis = rasterize_view(mesh, &cameras[k]);
        let mut acc = PartialTexture::new(resolution);
        backproject_view(mesh, &cameras[k], &vis, &views[k], &mut acc, params).map(|_| acc)
    });
    reduce(parts, resolution)
}

/// Like [`backproject_views`] with visibility already computed per camera.
pub fn backproject_visible(
    mesh: &Mesh,
    cameras: &[Camera],
    visibility: &[Visibility],
    views: &[PassImage],
    resolution: usize,
    params: &BlendParams,
) -> Result<PartialTexture, BlendError> {
    if cameras.len() != views.len() || visibility.len() != views.len() {
        return Err(BlendError::InvalidParams(format!(
            "{} cameras and {} visibility buffers for {} views",
            cameras.len(),
            visibility.len(),
            views.len()
        )));
    }
    if views.len() != params.n_views {
        return Err(BlendError::InvalidParams(format!("expected {} views, got {}", params.n_views, views.len())));
    }
    let parts = par::map_indices(views.len(), |k| {
        let mut acc = PartialTexture::new(resolution);
        backproject_view(mesh, &cameras[k], &visibility[k], &views[k], &mut acc, params).map(|_| acc)
    });
    reduce(parts, resolution)
}

fn reduce(parts: Vec<Result<PartialTexture, BlendError>>, resolution: usize) -> Result<PartialTexture, BlendError> {
    let mut total = PartialTexture::new(resolution);
    for part in parts {
        total.merge(&part?)?;
    }
    Ok(total)
}

/// Resolve each texel as color_accum / (weight_accum + epsilon). Texels
/// nobody painted resolve to the background.
pub fn blend_views(mut accum: PartialTexture, params: &BlendParams) -> Result<PartialTexture, BlendError> {
    params.validate()?;
    let resolved = accum
        .color_accum
        .iter()
        .zip(&accum.weight_accum)
        .map(|(c, &w)| {
            if w > 0.0 {
                let d = w + params.epsilon;
                [c[0] / d, c[1] / d, c[2] / d]
            } else {
                BACKGROUND.map(f64::from)
            }
        })
        .collect();
    accum.resolved = Some(resolved);
    Ok(accum)
}

/// Texels that need completion: mapped but (almost) never painted.
#[derive(Clone, Debug, PartialEq)]
pub struct InpaintMask {
    pub resolution: usize,
    pub mask: Vec<bool>,
}

impl InpaintMask {
    pub fn empty(resolution: usize) -> Self {
        Self {
            resolution,
            mask: vec![false; resolution * resolution],
        }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageIoError> {
        image::encode_mask_png(self.resolution, self.resolution, &self.mask)
    }
}

pub fn compute_inpaint_mask(blended: &PartialTexture, mapped: &[bool]) -> Result<InpaintMask, BlendError> {
    compute_inpaint_mask_with_floor(blended, mapped, WEIGHT_FLOOR)
}

pub fn compute_inpaint_mask_with_floor(blended: &PartialTexture, mapped: &[bool], floor: f64) -> Result<InpaintMask, BlendError> {
    if mapped.len() != blended.weight_accum.len() {
        return Err(BlendError::ResolutionMismatch(format!(
            "coverage has {} texels, partial texture {}",
            mapped.len(),
            blended.weight_accum.len()
        )));
    }
    Ok(InpaintMask {
        resolution: blended.resolution,
        mask: mapped.iter().zip(&blended.weight_accum).map(|(&m, &w)| m && w < floor).collect(),
    })
}

/// Mapped texels split into painted and masked; the rest are unmapped.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TexelStats {
    pub total: usize,
    pub mapped: usize,
    pub painted: usize,
    pub masked: usize,
}

impl TexelStats {
    pub fn measure(blended: &PartialTexture, mapped: &[bool], mask: &InpaintMask) -> Self {
        let mut s = TexelStats {
            total: mapped.len(),
            ..Default::default()
        };
        for i in 0..mapped.len() {
            if mapped[i] {
                s.mapped += 1;
                if mask.mask[i] {
                    s.masked += 1;
                } else if blended.weight_accum[i] >= WEIGHT_FLOOR {
                    s.painted += 1;
                }
            }
        }
        s
    }

    pub fn fraction(&self, n: usize) -> f64 {
        n as f64 / self.total.max(1) as f64
    }
}
