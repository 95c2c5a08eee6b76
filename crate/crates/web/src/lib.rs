//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every function returns tightly packed RGBA bytes ready for `ImageData`.

use texgen::backproject::{backproject_visible, blend_views, BlendParams};
use texgen::enhance::{gaussian_weight_map, plan_patches, weight_sums};
use texgen::image::{Image, Rgb};
use texgen::mesh::{self, primitives, Mesh};
use texgen::raster::{make_view_set, rasterize_view, shade, Camera, PassImage, PassKind, ViewConfig, Visibility};
use texgen::uvbake::{bake_with, rasterize_uv, UvKind};
use wasm_bindgen::prelude::*;

const RIG_VIEW_SIZE: usize = 128;
const TINTS: [Rgb; 4] = [[0.9, 0.2, 0.2], [0.2, 0.8, 0.3], [0.2, 0.4, 0.95], [0.95, 0.8, 0.2]];

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rgba(image: &Image, alpha: &[bool]) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.data.len() * 4);
    for (px, &a) in image.data.iter().zip(alpha) {
        out.extend(px.iter().map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8));
        out.push(if a { 255 } else { 0 });
    }
    out
}

/// Stripes in UV space so seams and stretching show up in renders.
fn stripes(u: f64, v: f64) -> Rgb {
    let a = (u * 24.0).floor() as i64;
    let b = (v * 12.0).floor() as i64;
    if (a + b).rem_euclid(2) == 0 {
        [0.95, 0.55, 0.2]
    } else {
        [0.15, 0.3, 0.55]
    }
}

/// A UV sphere prepared the way the pipeline prepares meshes, plus the rig.
#[wasm_bindgen]
pub struct Demo {
    mesh: Mesh,
    texture: Image,
    rig: [Camera; 4],
    rig_visibility: Vec<Visibility>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(texture_size: usize) -> Result<Demo, String> {
        let mesh = mesh::normalize_mesh(primitives::uv_sphere(48, 32)).map_err(err)?;
        let mesh = mesh::repack_uv_islands(mesh, mesh::DEFAULT_MARGIN_TEXELS).map_err(err)?;
        let raster = rasterize_uv(&mesh, texture_size).map_err(err)?;
        // color by the position each texel maps to so the pattern is seam-free
        let baked = bake_with(&mesh, &raster, UvKind::Color, |p, _| {
            let lon = p.z.atan2(p.x - 0.5) / std::f64::consts::TAU + 0.5;
            stripes(lon, p.y)
        });
        let rig = make_view_set(&ViewConfig::framing(&mesh, RIG_VIEW_SIZE));
        let rig_visibility = rig.iter().map(|c| rasterize_view(&mesh, c)).collect();
        Ok(Demo {
            texture: texgen::genstage::dilate_margins(&baked.color, &baked.mapped, 2),
            mesh,
            rig,
            rig_visibility,
        })
    }

    /// Render `kind` ("position", "normal" or "combined") from any orbit angle.
    pub fn render(&self, kind: &str, azimuth_deg: f64, elevation_deg: f64, size: usize) -> Result<Vec<u8>, String> {
        let kind = match kind {
            "position" => PassKind::Position,
            "normal" => PassKind::Normal,
            "combined" => PassKind::Combined,
            other => return Err(err(format!("unknown pass `{other}`"))),
        };
        let camera = Camera {
            azimuth_deg,
            elevation_deg,
            image_size: size,
            ..self.rig[0].clone()
        };
        let vis = rasterize_view(&self.mesh, &camera);
        let pass = shade(&self.mesh, &vis, kind, 0, Some(&self.texture)).map_err(err)?;
        Ok(rgba(&pass.color, &pass.coverage))
    }

    /// Paint each rig view a flat tint, project into UV space and blend with
    /// exponent `alpha`. Low exponents smear views together; high ones keep
    /// the most frontal view per texel.
    pub fn blend(&self, alpha: f64, resolution: usize) -> Result<Vec<u8>, String> {
        let params = BlendParams {
            alpha,
            ..BlendParams::default()
        };
        let views: Vec<PassImage> = self
            .rig_visibility
            .iter()
            .enumerate()
            .map(|(i, vis)| {
                let mut pass = shade(&self.mesh, vis, PassKind::Position, i, None)?;
                for (px, &c) in pass.color.data.iter_mut().zip(&pass.coverage) {
                    if c {
                        *px = TINTS[i];
                    }
                }
                Ok(pass)
            })
            .collect::<Result<_, texgen::raster::RasterError>>()
            .map_err(err)?;
        let views: [PassImage; 4] = views.try_into().map_err(|_| err("rig has four views"))?;
        let accum = backproject_visible(&self.mesh, &self.rig, &self.rig_visibility, &views, resolution, &params).map_err(err)?;
        let blended = blend_views(accum, &params).map_err(err)?;
        Ok(rgba(&blended.resolved_image(), &blended.painted()))
    }

    /// The four rig views as the generator sees them, stitched 2x2.
    pub fn rig_grid(&self, kind: &str) -> Result<Vec<u8>, String> {
        let views: Vec<Vec<u8>> = self
            .rig
            .iter()
            .map(|c| self.render(kind, c.azimuth_deg, c.elevation_deg, RIG_VIEW_SIZE))
            .collect::<Result<_, _>>()?;
        let s = RIG_VIEW_SIZE;
        let mut out = vec![0u8; 4 * s * s * 4];
        for (i, v) in views.iter().enumerate() {
            let (qx, qy) = (i % 2, i / 2);
            for y in 0..s {
                let dst = ((qy * s + y) * 2 * s + qx * s) * 4;
                out[dst..dst + 4 * s].copy_from_slice(&v[y * s * 4..(y + 1) * s * 4]);
            }
        }
        Ok(out)
    }
}

/// Side of [`Demo::rig_grid`] output.
#[wasm_bindgen]
pub fn rig_grid_size() -> usize {
    2 * RIG_VIEW_SIZE
}

/// Normalized weight of patch `highlight` over the whole image (red), total
/// patch coverage (green) and patch outlines (blue).
#[wasm_bindgen]
pub fn patch_weights(image_size: usize, patch_size: usize, overlap: usize, sigma: f64, highlight: usize) -> Result<Vec<u8>, String> {
    let schedule = plan_patches(image_size, patch_size, overlap).map_err(err)?;
    let weights = gaussian_weight_map(patch_size, sigma).map_err(err)?;
    let sums = weight_sums(&schedule, &weights);
    let counts = schedule.coverage_counts();
    let max_count = counts.iter().copied().max().unwrap_or(1).max(1) as f32;
    let (hx, hy) = schedule.patches[highlight.min(schedule.len() - 1)];
    let mut img = Image::new(image_size, image_size);
    for y in 0..image_size {
        for x in 0..image_size {
            let i = y * image_size + x;
            let inside = x >= hx && x < hx + patch_size && y >= hy && y < hy + patch_size;
            let w = if inside { (weights.get(x - hx, y - hy) / sums[i]) as f32 } else { 0.0 };
            let edge = schedule.patches.iter().any(|&(px, py)| {
                let on_x = (x == px || x + 1 == px + patch_size) && y >= py && y < py + patch_size;
                let on_y = (y == py || y + 1 == py + patch_size) && x >= px && x < px + patch_size;
                on_x || on_y
            });
            img.set(x, y, [w, 0.35 * counts[i] as f32 / max_count, if edge { 0.9 } else { 0.0 }]);
        }
    }
    Ok(rgba(&img, &vec![true; image_size * image_size]))
}

/// Number of patches the schedule places on a square image.
#[wasm_bindgen]
pub fn patch_count(image_size: usize, patch_size: usize, overlap: usize) -> Result<usize, String> {
    Ok(plan_patches(image_size, patch_size, overlap).map_err(err)?.len())
}
