use std::cmp::Reverse;
use std::collections::HashMap;

use log::warn;
use petgraph::unionfind::UnionFind;

use super::{Face, Mesh, MeshError, Vec2, Vec3};
use crate::raster::{tri, uv_setups};

/// Resolution at which packing margins are expressed.
pub const REFERENCE_RESOLUTION: f64 = 1024.0;
pub const DEFAULT_MARGIN_TEXELS: f64 = 4.0;
const DIAGNOSTIC_RESOLUTION: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct UvLayoutReport {
    pub has_uvs: bool,
    pub island_count: usize,
    /// Fraction of all texels claimed by two or more UV triangles.
    pub overlap_area: f64,
    /// Fraction of all texels claimed by at least one UV triangle.
    pub mapped_fraction: f64,
    pub out_of_bounds: bool,
    /// UV triangles with zero area; rasterizers skip them.
    pub degenerate_faces: usize,
}

pub fn validate_uv_layout(mesh: &Mesh) -> UvLayoutReport {
    validate_uv_layout_at(mesh, DIAGNOSTIC_RESOLUTION)
}

/// Rasterize every UV triangle at `resolution`^2 and count multiply
/// claimed texels.
pub fn validate_uv_layout_at(mesh: &Mesh, resolution: usize) -> UvLayoutReport {
    if !mesh.has_uvs() {
        return UvLayoutReport {
            has_uvs: false,
            island_count: 0,
            overlap_area: 0.0,
            mapped_fraction: 0.0,
            out_of_bounds: false,
            degenerate_faces: 0,
        };
    }
    let island_count = if mesh.island_ids.len() == mesh.faces.len() {
        mesh.island_count()
    } else {
        label_islands(mesh).1
    };
    let out_of_bounds = mesh
        .faces
        .iter()
        .flat_map(|f| f.uv)
        .any(|t| {
            let uv = mesh.uvs[t as usize];
            !(0.0..=1.0).contains(&uv.x) || !(0.0..=1.0).contains(&uv.y)
        });
    let setups = uv_setups(mesh, resolution);
    let mut claims = vec![0u8; resolution * resolution];
    tri::rasterize(&setups, resolution, resolution, &mut claims, |c, _, _| *c = c.saturating_add(1));
    let total = claims.len() as f64;
    let overlap = claims.iter().filter(|&&c| c >= 2).count() as f64 / total;
    let mapped = claims.iter().filter(|&&c| c >= 1).count() as f64 / total;
    UvLayoutReport {
        has_uvs: true,
        island_count,
        overlap_area: overlap,
        mapped_fraction: mapped,
        out_of_bounds,
        degenerate_faces: mesh.degenerate_uv_faces(),
    }
}

/// Connected components of faces joined by edges whose two UV indices
/// match. Labels follow first appearance in face order.
fn label_islands(mesh: &Mesh) -> (Vec<u32>, usize) {
    components(mesh.faces.len(), |f| mesh.faces[f].uv)
}

fn components(n_faces: usize, corners: impl Fn(usize) -> [u32; 3]) -> (Vec<u32>, usize) {
    let mut uf = UnionFind::<usize>::new(n_faces);
    let mut first_by_edge: HashMap<(u32, u32), usize> = HashMap::new();
    for f in 0..n_faces {
        let c = corners(f);
        for k in 0..3 {
            let (a, b) = (c[k], c[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            match first_by_edge.get(&key) {
                Some(&g) => {
                    uf.union(f, g);
                }
                None => {
                    first_by_edge.insert(key, f);
                }
            }
        }
    }
    let mut label_of_root: HashMap<usize, u32> = HashMap::new();
    let mut labels = Vec::with_capacity(n_faces);
    for f in 0..n_faces {
        let root = uf.find(f);
        let next = label_of_root.len() as u32;
        labels.push(*label_of_root.entry(root).or_insert(next));
    }
    (labels, label_of_root.len())
}

/// Assign island labels from UV connectivity; UV seams split islands.
pub fn detect_islands(mut mesh: Mesh) -> Result<Mesh, MeshError> {
    if !mesh.has_uvs() {
        return Err(MeshError::MissingUvs);
    }
    mesh.island_ids = label_islands(&mesh).0;
    Ok(mesh)
}

#[derive(Clone, Copy, Debug)]
struct IslandBox {
    id: usize,
    lo: Vec2,
    w: f64,
    h: f64,
}

/// Greedy shelf packing of `cells` (w, h) into the unit square in the given
/// order. Returns the lower-left corner of each cell on success.
fn shelf_pack(cells: &[(f64, f64)]) -> Option<Vec<Vec2>> {
    const TOL: f64 = 1e-12;
    let mut out = Vec::with_capacity(cells.len());
    let (mut x, mut y, mut shelf_h) = (0.0f64, 0.0f64, 0.0f64);
    for &(w, h) in cells {
        if w > 1.0 + TOL || h > 1.0 + TOL {
            return None;
        }
        if x + w > 1.0 + TOL {
            y += shelf_h;
            x = 0.0;
            shelf_h = 0.0;
        }
        if y + h > 1.0 + TOL {
            return None;
        }
        out.push(Vec2::new(x, y));
        x += w;
        shelf_h = shelf_h.max(h);
    }
    Some(out)
}

/// Translate and uniformly scale every island so they tile [0,1]^2 without
/// overlap, at least `margin_texels` (at the 1024 reference) apart and half
/// that from the border. One scale is shared by all islands, so relative
/// island areas are preserved.
pub fn repack_uv_islands(mesh: Mesh, margin_texels: f64) -> Result<Mesh, MeshError> {
    if !mesh.has_uvs() {
        return Err(MeshError::MissingUvs);
    }
    let mut mesh = if mesh.island_ids.len() == mesh.faces.len() {
        mesh
    } else {
        detect_islands(mesh)?
    };
    let margin = margin_texels.max(0.0) / REFERENCE_RESOLUTION;
    if margin >= 1.0 {
        return Err(MeshError::PackingFailed(format!("margin {margin_texels} texels leaves no room")));
    }
    let n_islands = mesh.island_count();

    let mut lo = vec![Vec2::repeat(f64::INFINITY); n_islands];
    let mut hi = vec![Vec2::repeat(f64::NEG_INFINITY); n_islands];
    for (f, face) in mesh.faces.iter().enumerate() {
        let id = mesh.island_ids[f] as usize;
        for &t in &face.uv {
            let uv = mesh.uvs[t as usize];
            lo[id] = lo[id].inf(&uv);
            hi[id] = hi[id].sup(&uv);
        }
    }
    let boxes: Vec<IslandBox> = (0..n_islands)
        .filter(|&i| lo[i].x.is_finite())
        .map(|i| IslandBox {
            id: i,
            lo: lo[i],
            w: hi[i].x - lo[i].x,
            h: hi[i].y - lo[i].y,
        })
        .collect();

    // Work on sizes normalized by total box area so the result depends only
    // on relative island sizes; this makes repacking a packed layout a no-op.
    let area: f64 = boxes.iter().map(|b| b.w * b.h).sum();
    let unit = if area > 0.0 {
        area.sqrt()
    } else {
        boxes.iter().map(|b| b.w.max(b.h)).fold(0.0, f64::max).max(1e-300)
    };
    let norm: Vec<(f64, f64)> = boxes.iter().map(|b| (b.w / unit, b.h / unit)).collect();
    let quant = |v: f64| (v * 1e9).round() as i64;
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by_key(|&k| (Reverse(quant(norm[k].1)), Reverse(quant(norm[k].0)), boxes[k].id));

    let cells_at = |s: f64| -> Vec<(f64, f64)> { order.iter().map(|&k| (norm[k].0 * s + margin, norm[k].1 * s + margin)).collect() };
    if shelf_pack(&cells_at(0.0)).is_none() {
        return Err(MeshError::PackingFailed(format!(
            "{} islands do not fit even at zero scale with a {margin_texels}-texel margin",
            boxes.len()
        )));
    }
    let mut upper = norm
        .iter()
        .flat_map(|&(w, h)| [w, h])
        .filter(|&d| d > 0.0)
        .map(|d| (1.0 - margin) / d)
        .fold(f64::INFINITY, f64::min);
    if area > 0.0 {
        upper = upper.min(1.0);
    }
    if !upper.is_finite() {
        upper = 1.0;
    }
    let scale = if shelf_pack(&cells_at(upper)).is_some() {
        upper
    } else {
        let (mut a, mut b) = (0.0, upper);
        for _ in 0..64 {
            let mid = 0.5 * (a + b);
            if shelf_pack(&cells_at(mid)).is_some() {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    };
    let origins = shelf_pack(&cells_at(scale)).expect("scale was verified feasible");

    let uv_scale = scale / unit;
    let mut target = vec![(Vec2::zeros(), Vec2::zeros()); n_islands];
    for (slot, &k) in order.iter().enumerate() {
        let b = boxes[k];
        target[b.id] = (b.lo, origins[slot] + Vec2::repeat(0.5 * margin));
    }
    let mut remap: HashMap<(u32, u32), u32> = HashMap::new();
    let mut uvs = Vec::new();
    for f in 0..mesh.faces.len() {
        let id = mesh.island_ids[f];
        let (src_lo, dst_lo) = target[id as usize];
        let corners = mesh.faces[f].uv;
        let mut new = [0u32; 3];
        for k in 0..3 {
            let key = (id, corners[k]);
            new[k] = *remap.entry(key).or_insert_with(|| {
                let uv = mesh.uvs[corners[k] as usize];
                uvs.push((uv - src_lo) * uv_scale + dst_lo);
                uvs.len() as u32 - 1
            });
        }
        mesh.faces[f].uv = new;
    }
    for uv in &mut uvs {
        *uv = uv.map(|c| c.clamp(0.0, 1.0));
    }
    mesh.uvs = uvs;
    Ok(mesh)
}

/// Dominant-axis direction index: 0..6 for +X, -X, +Y, -Y, +Z, -Z.
fn dominant_axis(n: &Vec3) -> usize {
    let a = n.map(f64::abs);
    let axis = if a.x >= a.y && a.x >= a.z {
        0
    } else if a.y >= a.z {
        1
    } else {
        2
    };
    2 * axis + usize::from(n[axis] < 0.0)
}

/// Planar coordinates for a point projected along a dominant axis, oriented
/// so charts are not mirrored when seen from outside.
fn project_along(axis: usize, p: &Vec3) -> Vec2 {
    match axis {
        0 => Vec2::new(-p.z, p.y),
        1 => Vec2::new(p.z, p.y),
        2 => Vec2::new(p.x, -p.z),
        3 => Vec2::new(p.x, p.z),
        4 => Vec2::new(p.x, p.y),
        _ => Vec2::new(-p.x, p.y),
    }
}

/// Generate a UV layout for a mesh without usable UVs: faces are grouped by
/// dominant normal axis, each connected group is planar-projected as one
/// chart, and the charts are repacked. If a projected chart folds over
/// itself, every face becomes its own chart instead.
pub fn fallback_unwrap(mut mesh: Mesh) -> Result<Mesh, MeshError> {
    let axes: Vec<usize> = (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.face_positions(f);
            dominant_axis(&(b - a).cross(&(c - a)))
        })
        .collect();
    // components by shared position edges, never crossing axis groups
    let mut uf = UnionFind::<usize>::new(mesh.faces.len());
    let mut first_by_edge: HashMap<(u32, u32, usize), usize> = HashMap::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (face.position[k], face.position[(k + 1) % 3]);
            let key = (a.min(b), a.max(b), axes[f]);
            match first_by_edge.get(&key) {
                Some(&g) => {
                    uf.union(f, g);
                }
                None => {
                    first_by_edge.insert(key, f);
                }
            }
        }
    }
    let mut label_of_root: HashMap<usize, u32> = HashMap::new();
    let labels: Vec<u32> = (0..mesh.faces.len())
        .map(|f| {
            let next = label_of_root.len() as u32;
            *label_of_root.entry(uf.find(f)).or_insert(next)
        })
        .collect();

    let charted = chart_by_labels(&mesh, &labels, &axes);
    let packed = repack_uv_islands(charted, DEFAULT_MARGIN_TEXELS)?;
    if validate_uv_layout(&packed).overlap_area == 0.0 {
        return Ok(packed);
    }
    warn!("planar charts overlap themselves; falling back to one chart per face");
    let per_face: Vec<u32> = (0..mesh.faces.len() as u32).collect();
    mesh = chart_by_labels(&mesh, &per_face, &axes);
    repack_uv_islands(mesh, DEFAULT_MARGIN_TEXELS)
}

fn chart_by_labels(mesh: &Mesh, labels: &[u32], axes: &[usize]) -> Mesh {
    let mut out = mesh.clone();
    let mut remap: HashMap<(u32, u32), u32> = HashMap::new();
    let mut uvs = Vec::new();
    let faces: Vec<Face> = mesh
        .faces
        .iter()
        .enumerate()
        .map(|(f, face)| {
            let uv = face.position.map(|p| {
                *remap.entry((labels[f], p)).or_insert_with(|| {
                    uvs.push(project_along(axes[f], &mesh.positions[p as usize]));
                    uvs.len() as u32 - 1
                })
            });
            Face { uv, ..*face }
        })
        .collect();
    out.faces = faces;
    out.uvs = uvs;
    out.island_ids = labels.to_vec();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    fn island_area(mesh: &Mesh, id: u32) -> f64 {
        (0..mesh.faces.len())
            .filter(|&f| mesh.island_ids[f] == id)
            .map(|f| {
                let [a, b, c] = mesh.face_uvs(f);
                let (e1, e2) = (b - a, c - a);
                0.5 * (e1.x * e2.y - e1.y * e2.x).abs()
            })
            .sum()
    }

    fn half_square(x0: f64) -> Mesh {
        let mut q = primitives::quad_xy(0.0, 1.0, 0.0, 1.0, 0.5);
        for uv in &mut q.uvs {
            uv.x = x0 + 0.5 * uv.x;
        }
        q
    }

    #[test]
    fn disjoint_halves_have_no_overlap() {
        let m = primitives::merge(&half_square(0.0), &half_square(0.5));
        let r = validate_uv_layout(&m);
        assert!(r.has_uvs);
        assert_eq!(r.island_count, 2);
        assert_eq!(r.overlap_area, 0.0);
        assert!(!r.out_of_bounds);
    }

    #[test]
    fn stacked_islands_overlap_by_island_area() {
        let m = primitives::merge(&half_square(0.0), &half_square(0.0));
        let r = validate_uv_layout(&m);
        assert!((r.overlap_area - 0.5).abs() < 2.0 / 1024.0, "{}", r.overlap_area);
    }

    #[test]
    fn no_uvs_report() {
        let m = primitives::without_uvs(primitives::uv_sphere(8, 6));
        assert!(!validate_uv_layout(&m).has_uvs);
    }

    #[test]
    fn island_detection_cases() {
        let sphere = detect_islands(primitives::uv_sphere(16, 8)).unwrap();
        assert_eq!(sphere.island_count(), 1);
        let cube = detect_islands(primitives::cube_stacked_uvs()).unwrap();
        assert_eq!(cube.island_count(), 6);
        let s = primitives::uv_sphere(8, 6);
        let two = detect_islands(primitives::merge(&s, &primitives::transformed(s.clone(), 0.5, Vec3::zeros()))).unwrap();
        assert_eq!(two.island_count(), 2);
        assert_eq!(two.island_ids.len(), two.faces.len());
    }

    #[test]
    fn repack_separates_overlapping_halves() {
        let m = primitives::merge(&half_square(0.0), &half_square(0.0));
        let packed = repack_uv_islands(m, DEFAULT_MARGIN_TEXELS).unwrap();
        let r = validate_uv_layout_at(&packed, 2048);
        assert_eq!(r.overlap_area, 0.0);
        assert!(!r.out_of_bounds);
        assert_eq!(packed.island_count(), 2);
    }

    #[test]
    fn repack_of_full_island_is_margin_inset() {
        let q = primitives::quad_xy(0.0, 1.0, 0.0, 1.0, 0.5);
        let packed = repack_uv_islands(q.clone(), DEFAULT_MARGIN_TEXELS).unwrap();
        let m = DEFAULT_MARGIN_TEXELS / REFERENCE_RESOLUTION;
        for f in 0..q.faces.len() {
            for (a, b) in q.face_uvs(f).iter().zip(packed.face_uvs(f)) {
                let expect = a * (1.0 - m) + Vec2::repeat(0.5 * m);
                assert!((expect - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn repack_preserves_area_ratio() {
        let big = primitives::quad_xy(0.0, 1.0, 0.0, 1.0, 0.5);
        let mut small = big.clone();
        for uv in &mut small.uvs {
            *uv *= 0.5;
        }
        let m = detect_islands(primitives::merge(&big, &small)).unwrap();
        let before = island_area(&m, 0) / island_area(&m, 1);
        assert!((before - 4.0).abs() < 1e-12);
        let packed = repack_uv_islands(m, DEFAULT_MARGIN_TEXELS).unwrap();
        let after = island_area(&packed, 0) / island_area(&packed, 1);
        assert!((after - 4.0).abs() < 1e-6);
    }

    #[test]
    fn repack_is_idempotent() {
        let m = primitives::cube_stacked_uvs();
        let once = repack_uv_islands(m, DEFAULT_MARGIN_TEXELS).unwrap();
        let twice = repack_uv_islands(once.clone(), DEFAULT_MARGIN_TEXELS).unwrap();
        for f in 0..once.faces.len() {
            for (a, b) in once.face_uvs(f).iter().zip(twice.face_uvs(f)) {
                assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn too_many_islands_fail_to_pack() {
        let mut m = primitives::uv_sphere(64, 64);
        m.island_ids = (0..m.faces.len() as u32).collect();
        assert!(matches!(repack_uv_islands(m, 200.0), Err(MeshError::PackingFailed(_))));
    }

    #[test]
    fn fallback_cube_gets_six_islands() {
        let cube = primitives::without_uvs(primitives::cube_stacked_uvs());
        let m = fallback_unwrap(cube).unwrap();
        assert_eq!(m.island_count(), 6);
        assert_eq!(validate_uv_layout_at(&m, 2048).overlap_area, 0.0);
    }

    #[test]
    fn fallback_flat_quad_keeps_aspect() {
        let q = primitives::without_uvs(primitives::quad_xy(0.0, 1.0, 0.25, 0.75, 0.5));
        let m = fallback_unwrap(q).unwrap();
        assert_eq!(m.island_count(), 1);
        let (lo, hi) = m.uvs.iter().fold((Vec2::repeat(9.0), Vec2::repeat(-9.0)), |(l, h), p| (l.inf(p), h.sup(p)));
        let ext = hi - lo;
        assert!((ext.x / ext.y - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fallback_sphere_covers_uv_square() {
        let s = primitives::without_uvs(primitives::uv_sphere(48, 32));
        let m = fallback_unwrap(s).unwrap();
        assert_eq!(m.island_count(), 6);
        let r = validate_uv_layout(&m);
        assert_eq!(r.overlap_area, 0.0);
        // planar charts of a sphere are discs inside their boxes, so the
        // mapped fraction sits well below the box fill
        assert!(r.mapped_fraction > 0.3, "{}", r.mapped_fraction);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn repack_never_overlaps(
                sizes in prop::collection::vec((0.05f64..1.0, 0.05f64..1.0, 0.0f64..0.5, 0.0f64..0.5), 1..12),
            ) {
                let mut mesh: Option<Mesh> = None;
                for &(w, h, x, y) in &sizes {
                    let mut q = primitives::quad_xy(0.0, 1.0, 0.0, 1.0, 0.5);
                    for uv in &mut q.uvs {
                        *uv = Vec2::new(x + w * uv.x, y + h * uv.y);
                    }
                    mesh = Some(match mesh { None => q, Some(m) => primitives::merge(&m, &q) });
                }
                let m = detect_islands(mesh.unwrap()).unwrap();
                let packed = repack_uv_islands(m, DEFAULT_MARGIN_TEXELS).unwrap();
                let r = validate_uv_layout_at(&packed, 2048);
                prop_assert_eq!(r.overlap_area, 0.0);
                prop_assert!(!r.out_of_bounds);
                let again = repack_uv_islands(packed.clone(), DEFAULT_MARGIN_TEXELS).unwrap();
                for (a, b) in packed.uvs.iter().zip(&again.uvs) {
                    prop_assert!((a - b).norm() < 1e-6);
                }
                let labels: std::collections::HashSet<u32> = packed.island_ids.iter().copied().collect();
                prop_assert_eq!(labels.len(), sizes.len());
            }
        }
    }
}
