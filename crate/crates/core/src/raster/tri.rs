//! Edge-function triangle setup with a watertight tie rule.
//!
//! Each edge function is evaluated from the edge's endpoints in a canonical
//! (lexicographic) order, so two triangles sharing an edge compute the exact
//! same value up to sign. A sample exactly on an edge is owned by the
//! triangle whose interior-oriented edge direction points toward +y (or +x
//! when horizontal), which is antisymmetric across the shared edge: every
//! sample on a shared edge or vertex is claimed exactly once.

use crate::par;

pub(crate) type P2 = [f64; 2];

#[derive(Clone, Copy, Debug)]
struct Edge {
    ax: f64,
    ay: f64,
    dx: f64,
    dy: f64,
    sign: f64,
    inclusive: bool,
}

impl Edge {
    fn new(p: P2, q: P2, opposite: P2) -> Option<Self> {
        let (a, b) = if (p[0], p[1]) <= (q[0], q[1]) { (p, q) } else { (q, p) };
        let mut e = Edge {
            ax: a[0],
            ay: a[1],
            dx: b[0] - a[0],
            dy: b[1] - a[1],
            sign: 1.0,
            inclusive: false,
        };
        let side = e.raw(opposite[0], opposite[1]);
        if side == 0.0 || !side.is_finite() {
            return None;
        }
        e.sign = side.signum();
        let (odx, ody) = (e.sign * e.dx, e.sign * e.dy);
        e.inclusive = ody > 0.0 || (ody == 0.0 && odx > 0.0);
        Some(e)
    }

    #[inline(always)]
    fn raw(&self, x: f64, y: f64) -> f64 {
        self.dx * (y - self.ay) - self.dy * (x - self.ax)
    }

    #[inline(always)]
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.sign * self.raw(x, y)
    }

    #[inline(always)]
    fn accepts(&self, v: f64) -> bool {
        v > 0.0 || (v == 0.0 && self.inclusive)
    }
}

/// A triangle ready for coverage tests over pixel centers (x + 0.5, y + 0.5).
#[derive(Clone, Copy, Debug)]
pub(crate) struct TriSetup {
    /// Edge opposite vertex i sits at index i.
    edges: [Edge; 3],
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl TriSetup {
    /// `None` for degenerate triangles or ones entirely off the raster.
    pub fn new(p: [P2; 3], width: usize, height: usize) -> Option<Self> {
        let edges = [
            Edge::new(p[1], p[2], p[0])?,
            Edge::new(p[2], p[0], p[1])?,
            Edge::new(p[0], p[1], p[2])?,
        ];
        let min_x = p[0][0].min(p[1][0]).min(p[2][0]);
        let max_x = p[0][0].max(p[1][0]).max(p[2][0]);
        let min_y = p[0][1].min(p[1][1]).min(p[2][1]);
        let max_y = p[0][1].max(p[1][1]).max(p[2][1]);
        // pixel i is a candidate when its center i + 0.5 lies inside [min, max]
        let lo = |v: f64| (v - 0.5).ceil().max(0.0);
        let hi = |v: f64, n: usize| ((v - 0.5).floor() + 1.0).min(n as f64);
        let (x0, x1) = (lo(min_x), hi(max_x, width));
        let (y0, y1) = (lo(min_y), hi(max_y, height));
        if !(x0 < x1 && y0 < y1) {
            return None;
        }
        Some(TriSetup {
            edges,
            x0: x0 as usize,
            x1: x1 as usize,
            y0: y0 as usize,
            y1: y1 as usize,
        })
    }

    /// Barycentric weights of the sample point when it is covered.
    #[inline]
    pub fn cover(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        let e0 = self.edges[0].eval(x, y);
        if !self.edges[0].accepts(e0) {
            return None;
        }
        let e1 = self.edges[1].eval(x, y);
        if !self.edges[1].accepts(e1) {
            return None;
        }
        let e2 = self.edges[2].eval(x, y);
        if !self.edges[2].accepts(e2) {
            return None;
        }
        let sum = e0 + e1 + e2;
        Some([e0 / sum, e1 / sum, e2 / sum])
    }
}

/// Rasterize `tris` in index order over `buf` (row-major, `width` wide),
/// calling `write(texel, tri_index, bary)` for each covered pixel center.
/// Work is split into horizontal bands that own their rows, so the output
/// is identical for any band size or thread count.
pub(crate) fn rasterize<T: Send>(
    tris: &[Option<TriSetup>],
    width: usize,
    height: usize,
    buf: &mut [T],
    write: impl Fn(&mut T, usize, [f64; 3]) + Sync + Send,
) {
    debug_assert_eq!(buf.len(), width * height);
    if width == 0 || height == 0 {
        return;
    }
    let band_rows = band_rows(height);
    par::for_each_chunk_mut(buf, band_rows * width, |band, rows| {
        let by0 = band * band_rows;
        let by1 = by0 + rows.len() / width;
        for (t, setup) in tris.iter().enumerate() {
            let Some(s) = setup else { continue };
            let ys = s.y0.max(by0);
            let ye = s.y1.min(by1);
            for y in ys..ye {
                let py = y as f64 + 0.5;
                let row = (y - by0) * width;
                for x in s.x0..s.x1 {
                    if let Some(b) = s.cover(x as f64 + 0.5, py) {
                        write(&mut rows[row + x], t, b);
                    }
                }
            }
        }
    });
}

fn band_rows(height: usize) -> usize {
    let bands = (par::workers() * 4).max(1);
    height.div_ceil(bands).clamp(1, 64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_claims(tris: &[[P2; 3]], w: usize, h: usize) -> Vec<u32> {
        let setups: Vec<_> = tris.iter().map(|t| TriSetup::new(*t, w, h)).collect();
        let mut buf = vec![0u32; w * h];
        rasterize(&setups, w, h, &mut buf, |c, _, _| *c += 1);
        buf
    }

    #[test]
    fn two_triangle_quad_claims_each_pixel_once() {
        // corners and diagonal pass exactly through pixel centers
        let q = [[1.5, 1.5], [9.5, 1.5], [9.5, 9.5], [1.5, 9.5]];
        for diag in [[0usize, 2], [1, 3]] {
            let (a, c) = (diag[0], diag[1]);
            let (b, d) = ((a + 1) % 4, (a + 3) % 4);
            let tris = [[q[a], q[b], q[c]], [q[a], q[c], q[d]]];
            let claims = count_claims(&tris, 12, 12);
            assert!(claims.iter().all(|&c| c <= 1));
            // quad spans centers 1.5..=9.5 on both axes; the half-open rule
            // keeps exactly an 8x8 block
            assert_eq!(claims.iter().filter(|&&c| c == 1).count(), 64);
        }
    }

    #[test]
    fn triangle_fan_around_center_pixel_is_watertight() {
        let c = [5.5, 5.5];
        let ring: Vec<P2> = (0..7)
            .map(|k| {
                let a = k as f64 / 7.0 * std::f64::consts::TAU;
                [5.5 + 4.0 * a.cos(), 5.5 + 4.0 * a.sin()]
            })
            .collect();
        let tris: Vec<[P2; 3]> = (0..7).map(|k| [c, ring[k], ring[(k + 1) % 7]]).collect();
        let claims = count_claims(&tris, 11, 11);
        assert!(claims.iter().all(|&n| n <= 1));
        assert_eq!(claims[5 * 11 + 5], 1, "shared fan vertex must be owned once");
    }

    #[test]
    fn orientation_does_not_matter() {
        let t = [[0.2, 0.3], [7.9, 1.1], [3.3, 6.8]];
        let r = [t[0], t[2], t[1]];
        assert_eq!(count_claims(&[t], 9, 9), count_claims(&[r], 9, 9));
    }

    #[test]
    fn degenerate_triangle_has_no_setup() {
        assert!(TriSetup::new([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], 4, 4).is_none());
    }

    #[test]
    fn barycentrics_reproduce_sample_point() {
        let p = [[0.5, 0.25], [8.0, 2.0], [2.0, 7.5]];
        let s = TriSetup::new(p, 10, 10).unwrap();
        let b = s.cover(3.5, 3.5).unwrap();
        let x = b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0];
        let y = b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1];
        assert!((x - 3.5).abs() < 1e-12 && (y - 3.5).abs() < 1e-12);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn random_quads_never_double_claim(
                pts in prop::collection::vec(0.0f64..16.0, 8),
            ) {
                let q: Vec<P2> = pts.chunks(2).map(|c| [c[0], c[1]]).collect();
                // both splits of an arbitrary (possibly non-convex) quad share one edge
                let tris = [[q[0], q[1], q[2]], [q[0], q[2], q[3]]];
                let setups: Vec<_> = tris.iter().map(|t| TriSetup::new(*t, 16, 16)).collect();
                prop_assume!(setups.iter().all(|s| s.is_some()));
                // pixels claimed by both are allowed only where the triangles overlap
                // in area; for a convex quad that never happens
                let convex = {
                    let cross = |a: P2, b: P2, c: P2| (b[0]-a[0])*(c[1]-a[1]) - (b[1]-a[1])*(c[0]-a[0]);
                    let s: Vec<f64> = (0..4).map(|i| cross(q[i], q[(i+1)%4], q[(i+2)%4])).collect();
                    s.iter().all(|&v| v > 0.0) || s.iter().all(|&v| v < 0.0)
                };
                prop_assume!(convex);
                let claims = count_claims(&tris, 16, 16);
                prop_assert!(claims.iter().all(|&c| c <= 1));
            }
        }
    }
}
