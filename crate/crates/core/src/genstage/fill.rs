//! Classical completion: pull-push hole filling and gutter dilation.

use crate::backproject::InpaintMask;
use crate::image::Image;
use crate::par;

use super::GenError;

struct Level {
    w: usize,
    h: usize,
    color: Vec<[f64; 3]>,
    weight: Vec<f64>,
}

impl Level {
    fn sample_bilinear(&self, fx: f64, fy: f64) -> [f64; 3] {
        let x0f = fx.floor();
        let y0f = fy.floor();
        let (tx, ty) = (fx - x0f, fy - y0f);
        let cx = |v: f64| v.clamp(0.0, (self.w - 1) as f64) as usize;
        let cy = |v: f64| v.clamp(0.0, (self.h - 1) as f64) as usize;
        let (x0, x1, y0, y1) = (cx(x0f), cx(x0f + 1.0), cy(y0f), cy(y0f + 1.0));
        let at = |x: usize, y: usize| self.color[y * self.w + x];
        let (a, b, c, d) = (at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1));
        std::array::from_fn(|k| {
            let top = a[k] + (b[k] - a[k]) * tx;
            let bot = c[k] + (d[k] - c[k]) * tx;
            top + (bot - top) * ty
        })
    }

    fn pull(&self) -> Level {
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut color = vec![[0.0; 3]; w * h];
        let mut weight = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut sum = [0.0; 3];
                let mut wsum = 0.0;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (fx, fy) = (2 * x + dx, 2 * y + dy);
                    if fx < self.w && fy < self.h {
                        let i = fy * self.w + fx;
                        let wi = self.weight[i];
                        if wi > 0.0 {
                            for k in 0..3 {
                                sum[k] += wi * self.color[i][k];
                            }
                            wsum += wi;
                        }
                    }
                }
                if wsum > 0.0 {
                    color[y * w + x] = sum.map(|s| s / wsum);
                    weight[y * w + x] = wsum.min(1.0);
                }
            }
        }
        Level { w, h, color, weight }
    }

    /// Blend in the completed coarser level where this one is not fully known.
    fn push(&mut self, coarse: &Level) {
        for y in 0..self.h {
            for x in 0..self.w {
                let i = y * self.w + x;
                let wi = self.weight[i];
                if wi >= 1.0 {
                    continue;
                }
                let up = coarse.sample_bilinear((x as f64 + 0.5) / 2.0 - 0.5, (y as f64 + 0.5) / 2.0 - 0.5);
                for k in 0..3 {
                    self.color[i][k] = wi * self.color[i][k] + (1.0 - wi) * up[k];
                }
                self.weight[i] = 1.0;
            }
        }
    }
}

/// Fill every masked texel from the `known` ones by pull-push. Texels that
/// are not masked come back unchanged.
pub fn pullpush_inpaint(colors: &Image, known: &[bool], mask: &InpaintMask) -> Result<Image, GenError> {
    let n = colors.width * colors.height;
    if known.len() != n || mask.mask.len() != n {
        return Err(GenError::InvalidRequest(format!(
            "image has {n} texels, known flags {}, mask {}",
            known.len(),
            mask.mask.len()
        )));
    }
    if mask.mask.iter().all(|&m| !m) {
        return Ok(colors.clone());
    }
    if !known.iter().any(|&k| k) {
        return Err(GenError::NothingPainted);
    }
    let base = Level {
        w: colors.width,
        h: colors.height,
        color: colors.data.iter().map(|c| c.map(f64::from)).collect(),
        weight: known.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(),
    };
    let mut pyramid = vec![base];
    while pyramid.last().is_some_and(|l| l.w > 1 || l.h > 1) {
        let next = pyramid.last().unwrap().pull();
        pyramid.push(next);
    }
    for l in (0..pyramid.len() - 1).rev() {
        let (fine, coarse) = pyramid.split_at_mut(l + 1);
        fine[l].push(&coarse[0]);
    }
    let filled = &pyramid[0];
    let mut out = colors.clone();
    for (i, &m) in mask.mask.iter().enumerate() {
        if m {
            out.data[i] = filled.color[i].map(|v| v as f32);
        }
    }
    Ok(out)
}

/// Copy the nearest mapped color into unmapped texels within `gutter`
/// texels (Chebyshev) of a mapped one. Nearest is Euclidean; ties go to the
/// first texel in row-major order.
pub fn dilate_margins(texture: &Image, mapped: &[bool], gutter: usize) -> Image {
    let (w, h) = (texture.width, texture.height);
    assert_eq!(mapped.len(), w * h, "mapped flags must match the texture");
    let mut out = texture.clone();
    if gutter == 0 {
        return out;
    }
    let g = gutter as isize;
    par::for_each_chunk_mut(&mut out.data, w, |y, row| {
        for (x, px) in row.iter_mut().enumerate() {
            if mapped[y * w + x] {
                continue;
            }
            let mut best: Option<(isize, usize)> = None;
            for dy in -g..=g {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for dx in -g..=g {
                    let sx = x as isize + dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let j = sy as usize * w + sx as usize;
                    if !mapped[j] {
                        continue;
                    }
                    let d = dx * dx + dy * dy;
                    if best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj)) {
                        best = Some((d, j));
                    }
                }
            }
            if let Some((_, j)) = best {
                *px = texture.data[j];
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> InpaintMask {
        assert_eq!(w, h);
        InpaintMask {
            resolution: w,
            mask: (0..w * h).map(|i| f(i % w, i / w)).collect(),
        }
    }

    #[test]
    fn single_known_texel_floods_everything() {
        let n = 13;
        let mut img = Image::new(n, n);
        img.set(4, 9, [0.2, 0.4, 0.8]);
        let known: Vec<bool> = (0..n * n).map(|i| i == 9 * n + 4).collect();
        let mask = mask_from(n, n, |x, y| !(x == 4 && y == 9));
        let out = pullpush_inpaint(&img, &known, &mask).unwrap();
        for c in &out.data {
            assert!((c[0] - 0.2).abs() < 1e-6 && (c[1] - 0.4).abs() < 1e-6 && (c[2] - 0.8).abs() < 1e-6);
        }
    }

    #[test]
    fn no_mask_is_identity() {
        let img = Image::from_fn(8, 8, |x, y| [x as f32 / 8.0, y as f32 / 8.0, 0.5]);
        let out = pullpush_inpaint(&img, &[true; 64], &mask_from(8, 8, |_, _| false)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn nothing_known_is_rejected() {
        let img = Image::new(4, 4);
        let r = pullpush_inpaint(&img, &[false; 16], &mask_from(4, 4, |_, _| true));
        assert!(matches!(r, Err(GenError::NothingPainted)));
    }

    #[test]
    fn linear_gradient_hole_center_within_two_percent() {
        let n = 64;
        let grad = |x: usize, y: usize| [0.2 + 0.6 * x as f32 / 63.0, 0.1 + 0.8 * y as f32 / 63.0, 0.5];
        let img = Image::from_fn(n, n, grad);
        let hole = |x: usize, y: usize| (28..36).contains(&x) && (28..36).contains(&y);
        let mask = mask_from(n, n, hole);
        let known: Vec<bool> = mask.mask.iter().map(|m| !m).collect();
        let mut holed = img.clone();
        for (i, &m) in mask.mask.iter().enumerate() {
            if m {
                holed.data[i] = [0.0; 3];
            }
        }
        let out = pullpush_inpaint(&holed, &known, &mask).unwrap();
        for (x, y) in [(31, 31), (32, 32), (31, 32), (32, 31)] {
            let want = grad(x, y);
            let got = out.get(x, y);
            for k in 0..3 {
                assert!(((got[k] - want[k]) / want[k]).abs() < 0.02, "({x},{y}) ch{k}: {} vs {}", got[k], want[k]);
            }
        }
    }

    #[test]
    fn checkerboard_hole_within_neighbor_hull() {
        let n = 16;
        let img = Image::from_fn(n, n, |x, y| if (x / 4 + y / 4) % 2 == 0 { [0.1, 0.2, 0.3] } else { [0.9, 0.7, 0.6] });
        let mask = mask_from(n, n, |x, y| (4..8).contains(&x) && (4..8).contains(&y));
        let known: Vec<bool> = mask.mask.iter().map(|m| !m).collect();
        let out = pullpush_inpaint(&img, &known, &mask).unwrap();
        for y in 4..8 {
            for x in 4..8 {
                let c = out.get(x, y);
                assert!((0.1..=0.9).contains(&c[0]) && (0.2..=0.7).contains(&c[1]) && (0.3..=0.6).contains(&c[2]));
            }
        }
    }

    #[test]
    fn dilation_zero_gutter_is_identity() {
        let img = Image::from_fn(6, 6, |x, _| [x as f32 / 6.0; 3]);
        let mapped: Vec<bool> = (0..36).map(|i| i % 3 == 0).collect();
        assert_eq!(dilate_margins(&img, &mapped, 0), img);
    }

    #[test]
    fn dilation_ring_takes_boundary_colors() {
        let n = 12;
        // 2x2 island in the middle, each texel a distinct color
        let island = |x: usize, y: usize| (5..7).contains(&x) && (5..7).contains(&y);
        let img = Image::from_fn(n, n, |x, y| if island(x, y) { [x as f32 / 10.0, y as f32 / 10.0, 1.0] } else { [0.0; 3] });
        let mapped: Vec<bool> = (0..n * n).map(|i| island(i % n, i / n)).collect();
        let out = dilate_margins(&img, &mapped, 2);
        for y in 0..n {
            for x in 0..n {
                let c = out.get(x, y);
                let cheb = [x.abs_diff(5).min(x.abs_diff(6)), y.abs_diff(5).min(y.abs_diff(6))];
                let in_x = (5..7).contains(&x);
                let in_y = (5..7).contains(&y);
                let dist = match (in_x, in_y) {
                    (true, true) => 0,
                    (true, false) => cheb[1],
                    (false, true) => cheb[0],
                    _ => cheb[0].max(cheb[1]),
                };
                if dist == 0 {
                    assert_eq!(c, img.get(x, y));
                } else if dist <= 2 {
                    // nearest island texel: clamp into the island
                    let nx = x.clamp(5, 6);
                    let ny = y.clamp(5, 6);
                    assert_eq!(c, img.get(nx, ny), "texel {x},{y}");
                } else {
                    assert_eq!(c, [0.0; 3]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn pullpush_stays_in_known_range(
            n in 2usize..24,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = Image::from_fn(n, n, |_, _| [rng.random(), rng.random(), rng.random()]);
            let known: Vec<bool> = (0..n * n).map(|_| rng.random_bool(0.3)).collect();
            prop_assume!(known.iter().any(|&k| k));
            let mask = InpaintMask { resolution: n, mask: known.iter().map(|k| !k).collect() };
            let out = pullpush_inpaint(&img, &known, &mask).unwrap();
            for k in 0..3 {
                let vals = img.data.iter().zip(&known).filter(|(_, &m)| m).map(|(c, _)| c[k]);
                let (lo, hi) = vals.fold((f32::MAX, f32::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
                for (i, c) in out.data.iter().enumerate() {
                    prop_assert!(c[k] >= lo - 1e-6 && c[k] <= hi + 1e-6);
                    if known[i] {
                        prop_assert_eq!(c[k], img.data[i][k]);
                    }
                }
            }
        }

        #[test]
        fn dilation_keeps_mapped_texels(
            n in 1usize..20,
            gutter in 0usize..5,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = Image::from_fn(n, n, |_, _| [rng.random(), rng.random(), rng.random()]);
            let mapped: Vec<bool> = (0..n * n).map(|_| rng.random_bool(0.4)).collect();
            let out = dilate_margins(&img, &mapped, gutter);
            for i in 0..n * n {
                if mapped[i] {
                    prop_assert_eq!(out.data[i], img.data[i]);
                }
            }
        }
    }
}
