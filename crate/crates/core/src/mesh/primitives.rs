//! Procedural meshes used by tests, benchmarks and the browser demo. All of
//! them live inside the unit cube already.

use std::f64::consts::{PI, TAU};

use super::{Face, Mesh, Vec2, Vec3};

/// Latitude/longitude sphere of radius 0.5 centered in the unit cube with a
/// single UV chart (seam along u = 0/1, one UV corner per pole triangle).
/// Produces `2 * slices * (stacks - 1)` triangles.
pub fn uv_sphere(slices: usize, stacks: usize) -> Mesh {
    assert!(slices >= 3 && stacks >= 2);
    let c = Vec3::repeat(0.5);
    let r = 0.5;
    let mut positions = vec![c + Vec3::new(0.0, r, 0.0)];
    for i in 1..stacks {
        let theta = PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let phi = TAU * j as f64 / slices as f64;
            positions.push(c + r * Vec3::new(theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos()));
        }
    }
    positions.push(c - Vec3::new(0.0, r, 0.0));
    let south = positions.len() as u32 - 1;
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;

    // UV grid rows 1..stacks-1 with a duplicated seam column, plus pole fans
    let mut uvs = Vec::new();
    for i in 1..stacks {
        for j in 0..=slices {
            uvs.push(Vec2::new(j as f64 / slices as f64, 1.0 - i as f64 / stacks as f64));
        }
    }
    let uv_ring = |i: usize, j: usize| ((i - 1) * (slices + 1) + j) as u32;
    let north_uv0 = uvs.len() as u32;
    for j in 0..slices {
        uvs.push(Vec2::new((j as f64 + 0.5) / slices as f64, 1.0));
    }
    let south_uv0 = uvs.len() as u32;
    for j in 0..slices {
        uvs.push(Vec2::new((j as f64 + 0.5) / slices as f64, 0.0));
    }

    let mut faces = Vec::new();
    let mut push = |p: [u32; 3], t: [u32; 3]| faces.push(Face { position: p, normal: p, uv: t });
    for j in 0..slices {
        push([0, ring(1, j), ring(1, j + 1)], [north_uv0 + j as u32, uv_ring(1, j), uv_ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, cc, d) = (ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1));
            let (ta, tb, tc, td) = (uv_ring(i, j), uv_ring(i + 1, j), uv_ring(i + 1, j + 1), uv_ring(i, j + 1));
            push([a, b, cc], [ta, tb, tc]);
            push([a, cc, d], [ta, tc, td]);
        }
    }
    for j in 0..slices {
        push(
            [south, ring(stacks - 1, j + 1), ring(stacks - 1, j)],
            [south_uv0 + j as u32, uv_ring(stacks - 1, j + 1), uv_ring(stacks - 1, j)],
        );
    }
    let normals = positions.iter().map(|p| (p - c) / r).collect();
    Mesh {
        positions,
        normals,
        uvs,
        faces,
        island_ids: Vec::new(),
    }
}

/// Axis-aligned quad in the plane z = `z`, facing +Z, UVs spanning [0,1]^2.
pub fn quad_xy(x0: f64, x1: f64, y0: f64, y1: f64, z: f64) -> Mesh {
    let positions = vec![
        Vec3::new(x0, y0, z),
        Vec3::new(x1, y0, z),
        Vec3::new(x1, y1, z),
        Vec3::new(x0, y1, z),
    ];
    let uvs = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ];
    Mesh {
        positions,
        normals: vec![Vec3::z()],
        uvs,
        faces: vec![
            Face {
                position: [0, 1, 2],
                normal: [0; 3],
                uv: [0, 1, 2],
            },
            Face {
                position: [0, 2, 3],
                normal: [0; 3],
                uv: [0, 2, 3],
            },
        ],
        island_ids: Vec::new(),
    }
}

/// Flat disc of `n` triangles facing +Z with its shared vertex at `center`.
pub fn fan_around(center: Vec3, radius: f64, n: usize) -> Mesh {
    let mut positions = vec![center];
    let mut uvs = vec![Vec2::new(0.5, 0.5)];
    for k in 0..n {
        let a = TAU * k as f64 / n as f64;
        positions.push(center + radius * Vec3::new(a.cos(), a.sin(), 0.0));
        uvs.push(Vec2::new(0.5 + 0.5 * a.cos(), 0.5 + 0.5 * a.sin()));
    }
    let faces = (0..n as u32)
        .map(|k| {
            let p = [0, 1 + k, 1 + (k + 1) % n as u32];
            Face {
                position: p,
                normal: [0; 3],
                uv: p,
            }
        })
        .collect();
    Mesh {
        positions,
        normals: vec![Vec3::z()],
        uvs,
        faces,
        island_ids: Vec::new(),
    }
}

/// Unit cube with each of the six faces mapped onto the full UV square, so
/// all six charts overlap until repacked.
pub fn cube_stacked_uvs() -> Mesh {
    let corners = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ];
    // counter-clockwise seen from outside
    let quads: [([u32; 4], [f64; 3]); 6] = [
        ([4, 5, 6, 7], [0.0, 0.0, 1.0]),
        ([1, 0, 3, 2], [0.0, 0.0, -1.0]),
        ([5, 1, 2, 6], [1.0, 0.0, 0.0]),
        ([0, 4, 7, 3], [-1.0, 0.0, 0.0]),
        ([7, 6, 2, 3], [0.0, 1.0, 0.0]),
        ([0, 1, 5, 4], [0.0, -1.0, 0.0]),
    ];
    let positions = corners.iter().map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    for (q, (idx, n)) in quads.iter().enumerate() {
        normals.push(Vec3::new(n[0], n[1], n[2]));
        let base = uvs.len() as u32;
        uvs.extend([
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ]);
        let nq = q as u32;
        faces.push(Face {
            position: [idx[0], idx[1], idx[2]],
            normal: [nq; 3],
            uv: [base, base + 1, base + 2],
        });
        faces.push(Face {
            position: [idx[0], idx[2], idx[3]],
            normal: [nq; 3],
            uv: [base, base + 2, base + 3],
        });
    }
    Mesh {
        positions,
        normals,
        uvs,
        faces,
        island_ids: Vec::new(),
    }
}

/// Concatenate two meshes; UVs are kept only if both have them.
pub fn merge(a: &Mesh, b: &Mesh) -> Mesh {
    let (pn, nn, tn) = (a.positions.len() as u32, a.normals.len() as u32, a.uvs.len() as u32);
    let keep_uv = a.has_uvs() && b.has_uvs();
    let mut out = a.clone();
    out.positions.extend(&b.positions);
    out.normals.extend(&b.normals);
    if keep_uv {
        out.uvs.extend(&b.uvs);
    } else {
        out.uvs.clear();
    }
    out.faces.extend(b.faces.iter().map(|f| Face {
        position: f.position.map(|i| i + pn),
        normal: f.normal.map(|i| i + nn),
        uv: f.uv.map(|i| i + tn),
    }));
    if !a.island_ids.is_empty() && !b.island_ids.is_empty() {
        let offset = a.island_count() as u32;
        out.island_ids.extend(b.island_ids.iter().map(|i| i + offset));
    } else {
        out.island_ids.clear();
    }
    out
}

/// Drop UVs and island labels.
pub fn without_uvs(mut mesh: Mesh) -> Mesh {
    mesh.uvs.clear();
    mesh.island_ids.clear();
    for f in &mut mesh.faces {
        f.uv = [0; 3];
    }
    mesh
}

/// Scale and move a mesh: p -> p * scale + offset.
pub fn transformed(mut mesh: Mesh, scale: f64, offset: Vec3) -> Mesh {
    for p in &mut mesh.positions {
        *p = *p * scale + offset;
    }
    mesh
}
