//! Software rasterizer for the per-view passes: position, normal and
//! combined (unlit texture lookup), plus the 2x2 grid layout the generator
//! consumes.

mod camera;
pub(crate) mod tri;

use thiserror::Error;

pub use camera::{
    bounding_radius, make_view_set, orbit_cameras, Camera, DistancePolicy, ViewConfig, CUBE_CENTER, DEFAULT_ELEVATION_DEG,
    DEFAULT_FOV_Y_DEG, FRAME_FILL, NEAR_PLANE,
};

use crate::image::{self, DecodedPng, Depth, Image, ImageIoError, Rgb};
use crate::mesh::{Mesh, Vec2, Vec3};
use tri::TriSetup;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("combined pass needs a texture")]
    MissingTexture,
    #[error("combined pass needs a mesh with UVs")]
    MissingUvs,
    #[error("grid views disagree: {0}")]
    GridMismatch(String),
    #[error("grid of {0}x{1} cannot be split into equal quadrants")]
    OddGrid(usize, usize),
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PassKind {
    Position,
    Normal,
    Combined,
}

impl PassKind {
    pub fn png_depth(self) -> Depth {
        match self {
            PassKind::Combined => Depth::Eight,
            _ => Depth::Sixteen,
        }
    }
}

/// Value stored in every channel of an uncovered pixel.
pub const BACKGROUND: Rgb = [0.0; 3];

/// Rasterizer output for one camera: the nearest face at each pixel center
/// and its perspective-correct barycentrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub face: u32,
    pub depth: f64,
    pub bary: [f64; 3],
}

impl Fragment {
    pub const EMPTY: Fragment = Fragment {
        face: u32::MAX,
        depth: f64::INFINITY,
        bary: [0.0; 3],
    };

    #[inline]
    pub fn is_covered(&self) -> bool {
        self.face != u32::MAX
    }
}

#[derive(Clone, Debug)]
pub struct Visibility {
    pub size: usize,
    pub fragments: Vec<Fragment>,
    /// Triangles dropped for crossing the near plane or being degenerate on screen.
    pub skipped_triangles: usize,
}

impl Visibility {
    pub fn coverage(&self) -> Vec<bool> {
        self.fragments.iter().map(Fragment::is_covered).collect()
    }
}

#[inline]
fn mix3(v: [Vec3; 3], b: [f64; 3]) -> Vec3 {
    v[0] * b[0] + v[1] * b[1] + v[2] * b[2]
}

/// Barycentric interpolation of a face's world position.
pub fn interpolate_position(mesh: &Mesh, face: usize, bary: [f64; 3]) -> Vec3 {
    mix3(mesh.face_positions(face), bary)
}

/// Interpolated vertex normal, renormalized.
pub fn interpolate_normal(mesh: &Mesh, face: usize, bary: [f64; 3]) -> Vec3 {
    let n = mix3(mesh.face_normals(face), bary);
    let len = n.norm();
    if len > 0.0 {
        n / len
    } else {
        let [a, b, c] = mesh.face_positions(face);
        (b - a).cross(&(c - a)).normalize()
    }
}

pub fn interpolate_uv(mesh: &Mesh, face: usize, bary: [f64; 3]) -> Vec2 {
    let [a, b, c] = mesh.face_uvs(face);
    a * bary[0] + b * bary[1] + c * bary[2]
}

/// Encode a unit normal into [0,1]^3.
#[inline]
pub fn encode_normal(n: &Vec3) -> Rgb {
    [((n.x + 1.0) * 0.5) as f32, ((n.y + 1.0) * 0.5) as f32, ((n.z + 1.0) * 0.5) as f32]
}

/// Depth-tested visibility of `mesh` from `camera`. Ties keep the
/// earlier face, so the result depends only on face order.
pub fn rasterize_view(mesh: &Mesh, camera: &Camera) -> Visibility {
    let size = camera.image_size;
    let view = camera.view();
    let projected: Vec<Option<([f64; 2], f64)>> = mesh.positions.iter().map(|p| camera.project(&view, p)).collect();
    let mut skipped = 0usize;
    let mut inv_depth = Vec::with_capacity(mesh.faces.len());
    let setups: Vec<Option<TriSetup>> = mesh
        .faces
        .iter()
        .map(|f| {
            let corners = f.position.map(|i| projected[i as usize]);
            let Some(c) = corners.iter().copied().collect::<Option<Vec<_>>>() else {
                skipped += 1;
                inv_depth.push([0.0; 3]);
                return None;
            };
            inv_depth.push([1.0 / c[0].1, 1.0 / c[1].1, 1.0 / c[2].1]);
            let setup = TriSetup::new([c[0].0, c[1].0, c[2].0], size, size);
            if setup.is_none() && is_degenerate([c[0].0, c[1].0, c[2].0]) {
                skipped += 1;
            }
            setup
        })
        .collect();
    let mut fragments = vec![Fragment::EMPTY; size * size];
    tri::rasterize(&setups, size, size, &mut fragments, |frag, t, b| {
        let w = inv_depth[t];
        let q = [b[0] * w[0], b[1] * w[1], b[2] * w[2]];
        let inv = q[0] + q[1] + q[2];
        let depth = 1.0 / inv;
        if depth < frag.depth {
            *frag = Fragment {
                face: t as u32,
                depth,
                bary: [q[0] * depth, q[1] * depth, q[2] * depth],
            };
        }
    });
    Visibility {
        size,
        fragments,
        skipped_triangles: skipped,
    }
}

/// UV position of a texture coordinate in texel units: x = u * res,
/// y = (1 - v) * res, so row 0 is the top (v = 1) like the PNG on disk.
#[inline]
pub fn uv_to_texel(uv: &Vec2, resolution: usize) -> [f64; 2] {
    let r = resolution as f64;
    [uv.x * r, (1.0 - uv.y) * r]
}

/// Triangle setups for rasterizing a mesh's UV layout; degenerate UV
/// triangles come back as `None`.
pub(crate) fn uv_setups(mesh: &Mesh, resolution: usize) -> Vec<Option<TriSetup>> {
    (0..mesh.faces.len())
        .map(|f| {
            let uv = mesh.face_uvs(f);
            TriSetup::new(uv.map(|t| uv_to_texel(&t, resolution)), resolution, resolution)
        })
        .collect()
}

fn is_degenerate(p: [[f64; 2]; 3]) -> bool {
    (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]) == 0.0
}

/// One rendered view. Invariant: `coverage[i]` false exactly when
/// `depth[i]` is infinite and the color is [`BACKGROUND`].
#[derive(Clone, Debug, PartialEq)]
pub struct PassImage {
    pub kind: PassKind,
    pub camera_index: usize,
    pub color: Image,
    pub coverage: Vec<bool>,
    pub depth: Vec<f32>,
}

impl PassImage {
    pub fn size(&self) -> usize {
        self.color.width
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageIoError> {
        image::encode_png(&self.color, Some(&self.coverage), self.kind.png_depth())
    }

    /// Rebuild from a PNG; depth is not stored on disk and comes back as
    /// 0 on covered pixels.
    pub fn from_png(decoded: DecodedPng, kind: PassKind, camera_index: usize) -> PassImage {
        let DecodedPng { image, alpha } = decoded;
        let coverage = alpha.unwrap_or_else(|| image.data.iter().map(|p| *p != BACKGROUND).collect());
        let depth = coverage.iter().map(|&c| if c { 0.0 } else { f32::INFINITY }).collect();
        PassImage {
            kind,
            camera_index,
            color: image,
            coverage,
            depth,
        }
    }
}

/// Turn a visibility solution into a pass image.
pub fn shade(mesh: &Mesh, vis: &Visibility, kind: PassKind, camera_index: usize, texture: Option<&Image>) -> Result<PassImage, RasterError> {
    if kind == PassKind::Combined {
        if texture.is_none() {
            return Err(RasterError::MissingTexture);
        }
        if !mesh.has_uvs() {
            return Err(RasterError::MissingUvs);
        }
    }
    let size = vis.size;
    let mut color = Image::new(size, size);
    let mut coverage = vec![false; size * size];
    let mut depth = vec![f32::INFINITY; size * size];
    for (i, frag) in vis.fragments.iter().enumerate() {
        if !frag.is_covered() {
            continue;
        }
        let f = frag.face as usize;
        let value = match kind {
            PassKind::Position => {
                let p = interpolate_position(mesh, f, frag.bary);
                [p.x as f32, p.y as f32, p.z as f32]
            }
            PassKind::Normal => encode_normal(&interpolate_normal(mesh, f, frag.bary)),
            PassKind::Combined => {
                let tex = texture.expect("checked above");
                let uv = interpolate_uv(mesh, f, frag.bary);
                tex.sample_bilinear(uv.x * tex.width as f64, (1.0 - uv.y) * tex.height as f64)
            }
        };
        color.data[i] = value;
        coverage[i] = true;
        depth[i] = frag.depth as f32;
    }
    Ok(PassImage {
        kind,
        camera_index,
        color,
        coverage,
        depth,
    })
}

/// Render one pass of `mesh` from `camera`.
pub fn render_pass(mesh: &Mesh, camera: &Camera, kind: PassKind, texture: Option<&Image>) -> Result<PassImage, RasterError> {
    if kind == PassKind::Combined && texture.is_none() {
        return Err(RasterError::MissingTexture);
    }
    let vis = rasterize_view(mesh, camera);
    shade(mesh, &vis, kind, 0, texture)
}

/// Four same-kind views in one image. Quadrants, row-major: views 0, 1, 2, 3
/// of the rig (azimuth 0, 90, 180, 270).
#[derive(Clone, Debug, PartialEq)]
pub struct GridImage {
    pub kind: PassKind,
    pub camera_indices: [usize; 4],
    pub color: Image,
    pub coverage: Vec<bool>,
    pub depth: Vec<f32>,
}

impl GridImage {
    pub fn size(&self) -> usize {
        self.color.width
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageIoError> {
        image::encode_png(&self.color, Some(&self.coverage), self.kind.png_depth())
    }

    pub fn from_png(decoded: DecodedPng, kind: PassKind) -> Result<GridImage, RasterError> {
        let pass = PassImage::from_png(decoded, kind, 0);
        if pass.color.width != pass.color.height {
            return Err(RasterError::GridMismatch(format!(
                "grid must be square, got {}x{}",
                pass.color.width, pass.color.height
            )));
        }
        Ok(GridImage {
            kind,
            camera_indices: [0, 1, 2, 3],
            color: pass.color,
            coverage: pass.coverage,
            depth: pass.depth,
        })
    }
}

const QUADRANTS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

pub fn stitch_grid(views: &[PassImage; 4]) -> Result<GridImage, RasterError> {
    let kind = views[0].kind;
    let size = views[0].size();
    for (i, v) in views.iter().enumerate() {
        if v.kind != kind {
            return Err(RasterError::GridMismatch(format!("view {i} is {:?}, view 0 is {kind:?}", v.kind)));
        }
        if v.color.width != size || v.color.height != size {
            return Err(RasterError::GridMismatch(format!(
                "view {i} is {}x{}, expected {size}x{size}",
                v.color.width, v.color.height
            )));
        }
    }
    let full = 2 * size;
    let mut color = Image::new(full, full);
    let mut coverage = vec![false; full * full];
    let mut depth = vec![f32::INFINITY; full * full];
    for (v, &(qx, qy)) in views.iter().zip(&QUADRANTS) {
        color.paste(&v.color, qx * size, qy * size);
        for y in 0..size {
            let dst = (qy * size + y) * full + qx * size;
            coverage[dst..dst + size].copy_from_slice(&v.coverage[y * size..(y + 1) * size]);
            depth[dst..dst + size].copy_from_slice(&v.depth[y * size..(y + 1) * size]);
        }
    }
    Ok(GridImage {
        kind,
        camera_indices: [views[0].camera_index, views[1].camera_index, views[2].camera_index, views[3].camera_index],
        color,
        coverage,
        depth,
    })
}

pub fn split_grid(grid: &GridImage) -> Result<[PassImage; 4], RasterError> {
    let (w, h) = (grid.color.width, grid.color.height);
    if w % 2 != 0 || h % 2 != 0 || w != h {
        return Err(RasterError::OddGrid(w, h));
    }
    let size = w / 2;
    Ok(std::array::from_fn(|q| {
        let (qx, qy) = QUADRANTS[q];
        let color = grid.color.crop(qx * size, qy * size, size, size);
        let mut coverage = Vec::with_capacity(size * size);
        let mut depth = Vec::with_capacity(size * size);
        for y in 0..size {
            let src = (qy * size + y) * w + qx * size;
            coverage.extend_from_slice(&grid.coverage[src..src + size]);
            depth.extend_from_slice(&grid.depth[src..src + size]);
        }
        PassImage {
            kind: grid.kind,
            camera_index: grid.camera_indices[q],
            color,
            coverage,
            depth,
        }
    }))
}

/// Render `kind` from each rig camera and stitch the four views.
pub fn render_grid(mesh: &Mesh, cameras: &[Camera; 4], kind: PassKind, texture: Option<&Image>) -> Result<GridImage, RasterError> {
    let mut views = Vec::with_capacity(4);
    for (i, cam) in cameras.iter().enumerate() {
        let vis = rasterize_view(mesh, cam);
        views.push(shade(mesh, &vis, kind, i, texture)?);
    }
    let views: [PassImage; 4] = views.try_into().expect("four views");
    stitch_grid(&views)
}

/// Combined-pass renders at azimuths k * 360 / n around the mesh.
pub fn render_turntable(
    mesh: &Mesh,
    texture: &Image,
    n_views: usize,
    elevation_deg: f64,
    config: &ViewConfig,
) -> Result<Vec<PassImage>, RasterError> {
    render_orbit(mesh, PassKind::Combined, Some(texture), n_views, elevation_deg, config)
}

/// Like [`render_turntable`] for any pass kind.
pub fn render_orbit(
    mesh: &Mesh,
    kind: PassKind,
    texture: Option<&Image>,
    n_views: usize,
    elevation_deg: f64,
    config: &ViewConfig,
) -> Result<Vec<PassImage>, RasterError> {
    let config = ViewConfig {
        elevation_deg,
        ..config.clone()
    };
    orbit_cameras(n_views.max(1), &config)
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let vis = rasterize_view(mesh, cam);
            shade(mesh, &vis, kind, i, texture)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    fn front_camera(size: usize) -> Camera {
        make_view_set(&ViewConfig {
            image_size: size,
            elevation_deg: 0.0,
            ..ViewConfig::default()
        })[0]
            .clone()
    }

    #[test]
    fn background_pixels_are_flagged() {
        let quad = primitives::quad_xy(0.4, 0.6, 0.4, 0.6, 0.5);
        let pass = render_pass(&quad, &front_camera(64), PassKind::Position, None).unwrap();
        assert!(!pass.coverage[0]);
        assert!(pass.depth[0].is_infinite());
        assert_eq!(pass.color.data[0], BACKGROUND);
        for i in 0..pass.coverage.len() {
            assert_eq!(pass.coverage[i], pass.depth[i].is_finite());
            if !pass.coverage[i] {
                assert_eq!(pass.color.data[i], BACKGROUND);
            }
        }
    }

    #[test]
    fn frontal_quad_normal_pass() {
        let quad = primitives::quad_xy(0.0, 1.0, 0.0, 1.0, 0.5);
        let pass = render_pass(&quad, &front_camera(64), PassKind::Normal, None).unwrap();
        let covered: Vec<_> = pass.color.data.iter().zip(&pass.coverage).filter(|(_, c)| **c).collect();
        assert!(!covered.is_empty());
        for (px, _) in covered {
            assert_eq!(*px, [0.5, 0.5, 1.0]);
        }
    }

    #[test]
    fn pixel_on_vertex_reports_vertex_position() {
        // odd image size puts the look-at point on a pixel center
        let target = Vec3::new(0.25, 0.5, 0.75);
        let mesh = primitives::fan_around(target, 0.05, 8);
        let cam = Camera {
            look_at: target,
            image_size: 101,
            ..front_camera(101)
        };
        let pass = render_pass(&mesh, &cam, PassKind::Position, None).unwrap();
        let i = 50 * 101 + 50;
        assert!(pass.coverage[i]);
        let p = pass.color.data[i];
        for k in 0..3 {
            assert!((p[k] as f64 - target[k]).abs() < 1e-4, "{p:?}");
        }
    }

    #[test]
    fn nearer_quad_wins_depth_test() {
        let mut mesh = primitives::quad_xy(0.2, 0.8, 0.2, 0.8, 0.3);
        let front = primitives::quad_xy(0.1, 0.9, 0.1, 0.9, 0.7);
        // append the nearer quad after the farther one, and again before it
        for near_first in [false, true] {
            let (a, b) = if near_first { (&front, &mesh) } else { (&mesh, &front) };
            let merged = primitives::merge(a, b);
            let pass = render_pass(&merged, &front_camera(80), PassKind::Position, None).unwrap();
            for (px, c) in pass.color.data.iter().zip(&pass.coverage) {
                if *c {
                    assert!((px[2] - 0.7).abs() < 1e-6, "far quad leaked: {px:?}");
                }
            }
        }
        mesh.faces.clear();
    }

    #[test]
    fn position_and_normal_invariants_on_sphere() {
        let sphere = primitives::uv_sphere(24, 16);
        for cam in make_view_set(&ViewConfig::framing(&sphere, 96)) {
            let vis = rasterize_view(&sphere, &cam);
            let pos = shade(&sphere, &vis, PassKind::Position, 0, None).unwrap();
            let nrm = shade(&sphere, &vis, PassKind::Normal, 0, None).unwrap();
            for i in 0..pos.coverage.len() {
                if !pos.coverage[i] {
                    continue;
                }
                assert!(pos.color.data[i].iter().all(|&c| (-1e-6..=1.0 + 1e-6).contains(&c)));
                let n = nrm.color.data[i].map(|c| 2.0 * c as f64 - 1.0);
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                assert!((len - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn combined_without_texture_errors() {
        let quad = primitives::quad_xy(0.0, 1.0, 0.0, 1.0, 0.5);
        assert!(matches!(
            render_pass(&quad, &front_camera(8), PassKind::Combined, None),
            Err(RasterError::MissingTexture)
        ));
    }

    #[test]
    fn combined_pass_reads_texture() {
        let quad = primitives::quad_xy(0.0, 1.0, 0.0, 1.0, 0.5);
        let tex = Image::filled(4, 4, [0.2, 0.4, 0.6]);
        let pass = render_pass(&quad, &front_camera(32), PassKind::Combined, Some(&tex)).unwrap();
        for (px, c) in pass.color.data.iter().zip(&pass.coverage) {
            if *c {
                assert_eq!(*px, [0.2, 0.4, 0.6]);
            }
        }
    }

    fn sample_views(size: usize) -> [PassImage; 4] {
        let sphere = primitives::uv_sphere(12, 8);
        let cams = make_view_set(&ViewConfig::framing(&sphere, size));
        std::array::from_fn(|i| {
            let vis = rasterize_view(&sphere, &cams[i]);
            shade(&sphere, &vis, PassKind::Normal, i, None).unwrap()
        })
    }

    #[test]
    fn stitch_places_quadrants_and_split_inverts() {
        let views = sample_views(16);
        let grid = stitch_grid(&views).unwrap();
        assert_eq!((grid.color.width, grid.color.height), (32, 32));
        assert_eq!(grid.color.get(3, 5), views[0].color.get(3, 5));
        assert_eq!(grid.color.get(16 + 3, 5), views[1].color.get(3, 5));
        assert_eq!(grid.color.get(3, 16 + 5), views[2].color.get(3, 5));
        assert_eq!(grid.camera_indices, [0, 1, 2, 3]);
        let back = split_grid(&grid).unwrap();
        assert_eq!(back, views);
    }

    #[test]
    fn stitch_rejects_mismatch() {
        let mut views = sample_views(8);
        views[2].kind = PassKind::Position;
        assert!(matches!(stitch_grid(&views), Err(RasterError::GridMismatch(_))));
        let mut views = sample_views(8);
        views[3] = sample_views(10)[3].clone();
        assert!(matches!(stitch_grid(&views), Err(RasterError::GridMismatch(_))));
    }

    #[test]
    fn split_rejects_odd_grid() {
        let grid = GridImage {
            kind: PassKind::Normal,
            camera_indices: [0, 1, 2, 3],
            color: Image::new(7, 7),
            coverage: vec![false; 49],
            depth: vec![f32::INFINITY; 49],
        };
        assert!(matches!(split_grid(&grid), Err(RasterError::OddGrid(7, 7))));
    }

    #[test]
    fn turntable_step_and_rig_identity() {
        let sphere = primitives::uv_sphere(16, 10);
        let tex = Image::from_fn(32, 32, |x, y| [x as f32 / 31.0, y as f32 / 31.0, 0.5]);
        let cfg = ViewConfig::framing(&sphere, 32);
        let cams = orbit_cameras(32, &cfg);
        assert!((cams[1].azimuth_deg - 11.25).abs() < 1e-12);
        let one = render_turntable(&sphere, &tex, 1, 20.0, &cfg).unwrap();
        assert_eq!(one.len(), 1);
        let four = render_turntable(&sphere, &tex, 4, 20.0, &cfg).unwrap();
        let rig = make_view_set(&cfg);
        for (i, cam) in rig.iter().enumerate() {
            let direct = shade(&sphere, &rasterize_view(&sphere, cam), PassKind::Combined, i, Some(&tex)).unwrap();
            assert_eq!(direct, four[i]);
        }
    }

    #[test]
    fn pass_png_roundtrip_keeps_coverage() {
        let views = sample_views(12);
        let bytes = views[1].encode_png().unwrap();
        let back = PassImage::from_png(image::decode_png(&bytes).unwrap(), PassKind::Normal, 1);
        assert_eq!(back.coverage, views[1].coverage);
    }
}
