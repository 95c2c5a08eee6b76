//! Deterministic stand-in generator: color is a smooth function of surface
//! position, normal and seed, so every view agrees on every surface point.

use std::f64::consts::TAU;

use crate::image::{Image, Rgb};
use crate::mesh::Vec3;
use crate::raster::{GridImage, PassKind, BACKGROUND};

use super::{GeneratorRequest, InpaintRequest};

// spatial frequencies in cycles per unit cube edge
const POS_FREQ: [[f64; 3]; 3] = [[1.3, 0.4, 0.9], [0.5, 1.1, 0.3], [0.7, 0.6, 1.4]];
const NRM_FREQ: [[f64; 3]; 3] = [[0.15, 0.05, 0.1], [0.05, 0.2, 0.05], [0.1, 0.05, 0.15]];

fn seed_phase(seed: u64) -> f64 {
    (seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / (1u64 << 53) as f64
}

/// Mock color of the surface point `p` with unit normal `n`.
pub fn mock_color(p: &Vec3, n: &Vec3, seed: u64) -> Rgb {
    let phase = seed_phase(seed);
    std::array::from_fn(|k| {
        let a = POS_FREQ[k];
        let b = NRM_FREQ[k];
        let t = a[0] * p.x + a[1] * p.y + a[2] * p.z + b[0] * n.x + b[1] * n.y + b[2] * n.z + phase + k as f64 / 3.0;
        (0.5 + 0.45 * (TAU * t).sin()) as f32
    })
}

/// Inverse of the normal pass encoding.
pub fn decode_normal(c: Rgb) -> Vec3 {
    let v = Vec3::new(2.0 * c[0] as f64 - 1.0, 2.0 * c[1] as f64 - 1.0, 2.0 * c[2] as f64 - 1.0);
    let len = v.norm();
    if len > 0.0 {
        v / len
    } else {
        v
    }
}

fn position_of(c: Rgb) -> Vec3 {
    Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)
}

pub fn mock_generate(req: &GeneratorRequest) -> GridImage {
    let pos = &req.position_grid;
    let nrm = &req.normal_grid;
    let mut color = Image::filled(pos.color.width, pos.color.height, BACKGROUND);
    for (i, out) in color.data.iter_mut().enumerate() {
        if pos.coverage[i] {
            *out = mock_color(&position_of(pos.color.data[i]), &decode_normal(nrm.color.data[i]), req.seed);
        }
    }
    GridImage {
        kind: PassKind::Combined,
        camera_indices: pos.camera_indices,
        color,
        coverage: pos.coverage.clone(),
        depth: pos.depth.clone(),
    }
}

/// Fill masked texels with the mock function of the baked position and
/// normal; everything else keeps the blended color.
pub fn mock_inpaint(req: &InpaintRequest) -> Image {
    let mut out = req.partial.resolved_image();
    for (i, &m) in req.mask.mask.iter().enumerate() {
        if m {
            out.data[i] = mock_color(&position_of(req.p_uv.color.data[i]), &decode_normal(req.n_uv.color.data[i]), req.seed);
        }
    }
    out
}
