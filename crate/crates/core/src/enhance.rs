//! Patch-based enhancement at arbitrary scale.
//!
//! Large images are processed as overlapping square patches. After every
//! step, the per-patch results are averaged back into one image with a
//! Gaussian weight centered on each patch, so neighbouring patches agree on
//! their overlap. The same aggregation blends tiles of an encoder/decoder
//! whose output is a fixed multiple of its input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genstage::{BackendDescriptor, BackendKind, GenError};
use crate::image::{Image, Rgb};
use crate::par;
use crate::uvbake::UvImage;

pub const DEFAULT_PATCH_SIZE: usize = 512;
pub const DEFAULT_OVERLAP: usize = 128;
pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_MAX_SIZE: usize = 8192;

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("invalid patch schedule: {0}")]
    Schedule(String),
    #[error("sigma must be positive, got {0}")]
    Sigma(f64),
    #[error("expected {expected} patch predictions, got {got}")]
    PatchCount { expected: usize, got: usize },
    #[error("patch {index} is {width}x{height}, expected {expected}x{expected}")]
    PatchSize { index: usize, width: usize, height: usize, expected: usize },
    #[error("enhancer failed at step {step}: {source}")]
    Backend { step: usize, source: GenError },
    #[error("ratio must be positive and finite, got {0}")]
    Ratio(f64),
    #[error("target size {size} exceeds the maximum of {max}")]
    TooLarge { size: usize, max: usize },
    #[error("codec output is {got_w}x{got_h} for a {tile}px tile; expected a fixed integer scale of {scale}")]
    CodecScale { tile: usize, got_w: usize, got_h: usize, scale: usize },
    #[error("steps must be >= 1")]
    ZeroSteps,
}

/// Overlapping square patches over a `width` x `height` image, origins in
/// row-major order. The last origin per axis is clamped so that patch ends
/// exactly at the image edge.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSchedule {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub patches: Vec<(usize, usize)>,
}

fn axis_origins(size: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = size - patch;
    let mut v: Vec<usize> = (0..).map(|k| k * stride).take_while(|&o| o < last).collect();
    v.push(last);
    v
}

pub fn plan_patches(image_size: usize, patch_size: usize, overlap: usize) -> Result<PatchSchedule, EnhanceError> {
    plan_patches_rect(image_size, image_size, patch_size, overlap)
}

pub fn plan_patches_rect(width: usize, height: usize, patch_size: usize, overlap: usize) -> Result<PatchSchedule, EnhanceError> {
    if patch_size == 0 || patch_size > width || patch_size > height {
        return Err(EnhanceError::Schedule(format!(
            "patch {patch_size} does not fit a {width}x{height} image"
        )));
    }
    if overlap >= patch_size {
        return Err(EnhanceError::Schedule(format!("overlap {overlap} must be below the patch size {patch_size}")));
    }
    let stride = patch_size - overlap;
    let xs = axis_origins(width, patch_size, stride);
    let ys = axis_origins(height, patch_size, stride);
    let patches = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    Ok(PatchSchedule {
        width,
        height,
        patch_size,
        stride,
        patches,
    })
}

impl PatchSchedule {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// How many patches cover each pixel.
    pub fn coverage_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.width * self.height];
        for &(x0, y0) in &self.patches {
            for y in y0..y0 + self.patch_size {
                for c in &mut counts[y * self.width + x0..y * self.width + x0 + self.patch_size] {
                    *c += 1;
                }
            }
        }
        counts
    }

    pub fn crop(&self, image: &Image) -> Vec<Image> {
        par::map_indices(self.patches.len(), |i| {
            let (x0, y0) = self.patches[i];
            image.crop(x0, y0, self.patch_size, self.patch_size)
        })
    }
}

/// Positive per-pixel patch weights, peak at the patch center.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub patch_size: usize,
    pub sigma: f64,
    pub weights: Vec<f64>,
}

impl WeightMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.patch_size + x]
    }
}

pub fn default_sigma(patch_size: usize) -> f64 {
    patch_size as f64 / 4.0
}

/// `exp(-d^2 / (2 sigma^2))` with `d` measured from pixel centers to the
/// patch center. Underflow is clamped to the smallest normal double.
pub fn gaussian_weight_map(patch_size: usize, sigma: f64) -> Result<WeightMap, EnhanceError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(EnhanceError::Sigma(sigma));
    }
    let c = patch_size as f64 / 2.0;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut weights = Vec::with_capacity(patch_size * patch_size);
    for y in 0..patch_size {
        let dy = y as f64 + 0.5 - c;
        for x in 0..patch_size {
            let dx = x as f64 + 0.5 - c;
            weights.push((-(dx * dx + dy * dy) * inv).exp().max(f64::MIN_POSITIVE));
        }
    }
    Ok(WeightMap {
        patch_size,
        sigma,
        weights,
    })
}

fn check_inputs(n: usize, patch: usize, schedule: &PatchSchedule, weights: &WeightMap) -> Result<(), EnhanceError> {
    if n != schedule.len() {
        return Err(EnhanceError::PatchCount {
            expected: schedule.len(),
            got: n,
        });
    }
    if weights.patch_size != schedule.patch_size || patch != schedule.patch_size {
        return Err(EnhanceError::Schedule(format!(
            "weight map is {}px, schedule patches are {}px",
            weights.patch_size, schedule.patch_size
        )));
    }
    Ok(())
}

/// Per-pixel sum of the weights of every patch covering it.
pub fn weight_sums(schedule: &PatchSchedule, weights: &WeightMap) -> Vec<f64> {
    let w = schedule.width;
    let mut sums = vec![0.0; w * schedule.height];
    let p = schedule.patch_size;
    for &(x0, y0) in &schedule.patches {
        for y in 0..p {
            let row = &mut sums[(y0 + y) * w + x0..(y0 + y) * w + x0 + p];
            for (x, s) in row.iter_mut().enumerate() {
                *s += weights.get(x, y);
            }
        }
    }
    sums
}

/// Weighted average of overlapping patch predictions. Rows are processed in
/// parallel bands but each pixel sums its patches in schedule order.
pub fn aggregate_patches(predictions: &[Image], schedule: &PatchSchedule, weights: &WeightMap) -> Result<Image, EnhanceError> {
    check_inputs(predictions.len(), weights.patch_size, schedule, weights)?;
    let p = schedule.patch_size;
    for (index, pred) in predictions.iter().enumerate() {
        if pred.width != p || pred.height != p {
            return Err(EnhanceError::PatchSize {
                index,
                width: pred.width,
                height: pred.height,
                expected: p,
            });
        }
    }
    let (w, h) = (schedule.width, schedule.height);
    let mut out = Image::new(w, h);
    par::for_each_chunk_mut(&mut out.data, w, |y, row| {
        let mut num = vec![[0.0f64; 3]; w];
        let mut den = vec![0.0f64; w];
        for (pred, &(x0, y0)) in predictions.iter().zip(&schedule.patches) {
            if y < y0 || y >= y0 + p {
                continue;
            }
            let py = y - y0;
            for px in 0..p {
                let wt = weights.get(px, py);
                let c = pred.data[py * p + px];
                let n = &mut num[x0 + px];
                for k in 0..3 {
                    n[k] += wt * c[k] as f64;
                }
                den[x0 + px] += wt;
            }
        }
        for (x, out) in row.iter_mut().enumerate() {
            *out = std::array::from_fn(|k| (num[x][k] / den[x]) as f32);
        }
    });
    Ok(out)
}

/// Iterate `steps` times: crop patches, advance each with `step_fn(patch,
/// step)`, and aggregate.
pub fn multidiffusion_run(
    initial: &Image,
    steps: usize,
    step_fn: impl Fn(&Image, usize) -> Result<Image, GenError> + Sync + Send,
    schedule: &PatchSchedule,
    weights: &WeightMap,
) -> Result<Image, EnhanceError> {
    if steps == 0 {
        return Err(EnhanceError::ZeroSteps);
    }
    if initial.width != schedule.width || initial.height != schedule.height {
        return Err(EnhanceError::Schedule(format!(
            "image is {}x{}, schedule covers {}x{}",
            initial.width, initial.height, schedule.width, schedule.height
        )));
    }
    let mut current = initial.clone();
    for step in 0..steps {
        let crops = schedule.crop(&current);
        let stepped = par::map_indices(crops.len(), |i| step_fn(&crops[i], step));
        let preds = stepped
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| EnhanceError::Backend { step, source })?;
        current = aggregate_patches(&preds, schedule, weights)?;
    }
    Ok(current)
}

/// Run `codec` on overlapping `tile`-sized tiles and blend the outputs. The
/// codec must scale every tile by the same integer factor.
pub fn tiled_apply(image: &Image, codec: impl Fn(&Image) -> Image + Sync + Send, tile: usize, overlap: usize) -> Result<Image, EnhanceError> {
    let schedule = plan_patches_rect(image.width, image.height, tile, overlap)?;
    let outputs = par::map_indices(schedule.len(), |i| {
        let (x0, y0) = schedule.patches[i];
        codec(&image.crop(x0, y0, tile, tile))
    });
    let scale = outputs[0].width / tile;
    for o in &outputs {
        if scale == 0 || o.width != scale * tile || o.height != scale * tile {
            return Err(EnhanceError::CodecScale {
                tile,
                got_w: o.width,
                got_h: o.height,
                scale,
            });
        }
    }
    let out_patch = tile * scale;
    let scaled = PatchSchedule {
        width: image.width * scale,
        height: image.height * scale,
        patch_size: out_patch,
        stride: schedule.stride * scale,
        patches: schedule.patches.iter().map(|&(x, y)| (x * scale, y * scale)).collect(),
    };
    let weights = gaussian_weight_map(out_patch, default_sigma(out_patch))?;
    aggregate_patches(&outputs, &scaled, &weights)
}

fn cubic(t: f64) -> f64 {
    // Keys kernel, a = -0.5
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Taps and weights for one output coordinate along an axis.
fn taps(dst: usize, src_len: usize, dst_len: usize) -> ([usize; 4], [f64; 4]) {
    let s = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
    let base = s.floor();
    let t = s - base;
    let mut idx = [0usize; 4];
    let mut w = [0.0; 4];
    for k in 0..4 {
        let off = k as f64 - 1.0;
        idx[k] = (base + off).clamp(0.0, src_len as f64 - 1.0) as usize;
        w[k] = cubic(t - off);
    }
    let sum: f64 = w.iter().sum();
    (idx, w.map(|v| v / sum))
}

/// Separable bicubic resampling with clamp-to-edge addressing. A resample to
/// the same size returns the input unchanged.
pub fn resample_bicubic(image: &Image, width: usize, height: usize) -> Image {
    if width == image.width && height == image.height {
        return image.clone();
    }
    let (sw, sh) = (image.width, image.height);
    let xt: Vec<_> = (0..width).map(|x| taps(x, sw, width)).collect();
    let yt: Vec<_> = (0..height).map(|y| taps(y, sh, height)).collect();
    let mut horiz = vec![[0.0f64; 3]; width * sh];
    par::for_each_chunk_mut(&mut horiz, width, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let (idx, w) = xt[x];
            let mut acc = [0.0; 3];
            for k in 0..4 {
                let c = image.data[y * sw + idx[k]];
                for ch in 0..3 {
                    acc[ch] += w[k] * c[ch] as f64;
                }
            }
            *out = acc;
        }
    });
    let mut out = Image::new(width, height);
    par::for_each_chunk_mut(&mut out.data, width, |y, row| {
        let (idx, w) = yt[y];
        for (x, px) in row.iter_mut().enumerate() {
            let mut acc = [0.0; 3];
            for k in 0..4 {
                let c = horiz[idx[k] * width + x];
                for ch in 0..3 {
                    acc[ch] += w[k] * c[ch];
                }
            }
            *px = acc.map(|v| v.clamp(0.0, 1.0) as f32);
        }
    });
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceParams {
    pub patch_size: usize,
    pub overlap: usize,
    /// Gaussian sigma in pixels; `None` means a quarter of the patch size.
    pub sigma: Option<f64>,
    pub steps: usize,
    pub max_size: usize,
    pub seed: u64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            patch_size: DEFAULT_PATCH_SIZE,
            overlap: DEFAULT_OVERLAP,
            sigma: None,
            steps: DEFAULT_STEPS,
            max_size: DEFAULT_MAX_SIZE,
            seed: 0,
        }
    }
}

pub fn target_size(resolution: usize, ratio: f64) -> Result<usize, EnhanceError> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(EnhanceError::Ratio(ratio));
    }
    Ok(((resolution as f64 * ratio).round() as usize).max(1))
}

/// Resample a texture by `ratio`, then refine it patch-wise with the
/// enhancer. Local backends are the identity, so for them this is a plain
/// bicubic resample.
pub fn enhance_texture(texture: &UvImage, ratio: f64, enhancer: &BackendDescriptor, params: &EnhanceParams) -> Result<UvImage, EnhanceError> {
    let res = texture.resolution();
    let size = target_size(res, ratio)?;
    if size > params.max_size {
        return Err(EnhanceError::TooLarge {
            size,
            max: params.max_size,
        });
    }
    let resampled = resample_bicubic(&texture.color, size, size);
    let color = match enhancer.kind {
        BackendKind::Mock | BackendKind::Pullpush => resampled,
        BackendKind::Remote => {
            let patch = params.patch_size.min(size);
            let overlap = params.overlap.min(patch - 1);
            let schedule = plan_patches(size, patch, overlap)?;
            let weights = gaussian_weight_map(patch, params.sigma.unwrap_or(default_sigma(patch)))?;
            remote_run(&resampled, enhancer, params, &schedule, &weights)?
        }
    };
    let mapped = (0..size * size)
        .map(|i| {
            let (x, y) = (i % size, i / size);
            texture.mapped[(y * res / size) * res + x * res / size]
        })
        .collect();
    Ok(UvImage {
        kind: texture.kind,
        color,
        mapped,
    })
}

#[cfg(feature = "remote")]
fn remote_run(image: &Image, enhancer: &BackendDescriptor, params: &EnhanceParams, schedule: &PatchSchedule, weights: &WeightMap) -> Result<Image, EnhanceError> {
    let total = params.steps;
    multidiffusion_run(
        image,
        total,
        |patch, step| crate::genstage::remote_enhance_step(enhancer, params.seed, patch, step, total),
        schedule,
        weights,
    )
}

#[cfg(not(feature = "remote"))]
fn remote_run(_: &Image, _: &BackendDescriptor, _: &EnhanceParams, _: &PatchSchedule, _: &WeightMap) -> Result<Image, EnhanceError> {
    Err(EnhanceError::Backend {
        step: 0,
        source: GenError::RemoteDisabled,
    })
}

/// Nearest-neighbour upsample by an integer factor.
pub fn upsample_nearest(image: &Image, factor: usize) -> Image {
    Image::from_fn(image.width * factor, image.height * factor, |x, y| image.get(x / factor, y / factor))
}

/// Per-channel affine map, handy as a linear codec.
pub fn affine(image: &Image, gain: Rgb, offset: Rgb) -> Image {
    Image {
        width: image.width,
        height: image.height,
        data: image
            .data
            .iter()
            .map(|c| std::array::from_fn(|k| c[k] * gain[k] + offset[k]))
            .collect(),
    }
}
