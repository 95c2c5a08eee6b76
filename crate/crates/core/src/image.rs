//! Float RGB images and the PNG encodings used for every on-disk artifact.
//!
//! Color images are written as 8-bit PNG, geometry channels (positions,
//! normals, weights) as 16-bit PNG. A per-pixel flag (coverage, mapped,
//! painted) travels in the alpha channel: 255/65535 = set, 0 = clear.

use std::io::{Cursor, Write};
use std::path::Path;

use thiserror::Error;

pub type Rgb = [f32; 3];

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("png encode failed: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decode failed: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("unsupported png layout: {0}")]
    Unsupported(String),
    #[error("flag buffer has {got} entries, image has {expected} pixels")]
    FlagLength { expected: usize, got: usize },
}

/// Dense row-major RGB image, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: Rgb) {
        self.data[y * self.width + x] = value;
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Image {
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
        }
        Image {
            width,
            height,
            data,
        }
    }

    pub fn paste(&mut self, src: &Image, x0: usize, y0: usize) {
        for y in 0..src.height {
            let dst = (y0 + y) * self.width + x0;
            self.data[dst..dst + src.width]
                .copy_from_slice(&src.data[y * src.width..(y + 1) * src.width]);
        }
    }

    /// Bilinear lookup at continuous pixel coordinates, pixel centers at
    /// integer + 0.5, clamp-to-edge addressing.
    pub fn sample_bilinear(&self, px: f64, py: f64) -> Rgb {
        let fx = px - 0.5;
        let fy = py - 0.5;
        let x0f = fx.floor();
        let y0f = fy.floor();
        let tx = (fx - x0f) as f32;
        let ty = (fy - y0f) as f32;
        let clamp_x = |v: f64| v.clamp(0.0, (self.width - 1) as f64) as usize;
        let clamp_y = |v: f64| v.clamp(0.0, (self.height - 1) as f64) as usize;
        let (x0, x1) = (clamp_x(x0f), clamp_x(x0f + 1.0));
        let (y0, y1) = (clamp_y(y0f), clamp_y(y0f + 1.0));
        let a = self.get(x0, y0);
        let b = self.get(x1, y0);
        let c = self.get(x0, y1);
        let d = self.get(x1, y1);
        let mut out = [0.0f32; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * tx;
            let bot = c[k] + (d[k] - c[k]) * tx;
            out[k] = top + (bot - top) * ty;
        }
        out
    }
}

/// Peak signal-to-noise ratio (peak 1.0) over pixels selected by `select`.
pub fn psnr(a: &Image, b: &Image, select: Option<&[bool]>) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height));
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (i, (pa, pb)) in a.data.iter().zip(&b.data).enumerate() {
        if select.is_some_and(|s| !s[i]) {
            continue;
        }
        for k in 0..3 {
            let d = (pa[k] - pb[k]) as f64;
            sum += d * d;
        }
        count += 3;
    }
    if count == 0 {
        return f64::INFINITY;
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {
    Eight,
    Sixteen,
}

#[inline]
fn quantize(v: f32, max: f32) -> u32 {
    (v.clamp(0.0, 1.0) * max).round() as u32
}

/// Encode an RGB image (plus optional alpha flags) as a PNG byte buffer.
pub fn encode_png(image: &Image, flags: Option<&[bool]>, depth: Depth) -> Result<Vec<u8>, ImageIoError> {
    if let Some(f) = flags {
        if f.len() != image.data.len() {
            return Err(ImageIoError::FlagLength {
                expected: image.data.len(),
                got: f.len(),
            });
        }
    }
    let channels = if flags.is_some() { 4 } else { 3 };
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(Cursor::new(&mut buf), image.width as u32, image.height as u32);
        enc.set_color(if flags.is_some() {
            png::ColorType::Rgba
        } else {
            png::ColorType::Rgb
        });
        let bytes = match depth {
            Depth::Eight => {
                enc.set_depth(png::BitDepth::Eight);
                let mut raw = Vec::with_capacity(image.data.len() * channels);
                for (i, p) in image.data.iter().enumerate() {
                    for &c in p {
                        raw.push(quantize(c, 255.0) as u8);
                    }
                    if let Some(f) = flags {
                        raw.push(if f[i] { 255 } else { 0 });
                    }
                }
                raw
            }
            Depth::Sixteen => {
                enc.set_depth(png::BitDepth::Sixteen);
                let mut raw = Vec::with_capacity(image.data.len() * channels * 2);
                for (i, p) in image.data.iter().enumerate() {
                    for &c in p {
                        raw.extend_from_slice(&(quantize(c, 65535.0) as u16).to_be_bytes());
                    }
                    if let Some(f) = flags {
                        raw.extend_from_slice(&(if f[i] { 65535u16 } else { 0 }).to_be_bytes());
                    }
                }
                raw
            }
        };
        enc.set_compression(png::Compression::Fast);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&bytes)?;
        writer.finish()?;
    }
    Ok(buf)
}

/// Encode a flag image as a 1-bit grayscale PNG (set = white).
pub fn encode_mask_png(width: usize, height: usize, flags: &[bool]) -> Result<Vec<u8>, ImageIoError> {
    if flags.len() != width * height {
        return Err(ImageIoError::FlagLength {
            expected: width * height,
            got: flags.len(),
        });
    }
    let stride = width.div_ceil(8);
    let mut raw = vec![0u8; stride * height];
    for y in 0..height {
        for x in 0..width {
            if flags[y * width + x] {
                raw[y * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(Cursor::new(&mut buf), width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        enc.set_compression(png::Compression::Fast);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&raw)?;
        writer.finish()?;
    }
    Ok(buf)
}

/// Encode a scalar field as 16-bit grayscale, values mapped through `scale`.
pub fn encode_gray16_png(width: usize, height: usize, values: &[f64], scale: f64) -> Result<Vec<u8>, ImageIoError> {
    if values.len() != width * height {
        return Err(ImageIoError::FlagLength {
            expected: width * height,
            got: values.len(),
        });
    }
    let mut raw = Vec::with_capacity(values.len() * 2);
    for &v in values {
        let q = ((v * scale).clamp(0.0, 1.0) * 65535.0).round() as u16;
        raw.extend_from_slice(&q.to_be_bytes());
    }
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(Cursor::new(&mut buf), width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        enc.set_compression(png::Compression::Fast);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&raw)?;
        writer.finish()?;
    }
    Ok(buf)
}

/// A decoded PNG: RGB in [0,1] plus the alpha channel as flags when present.
#[derive(Clone, Debug)]
pub struct DecodedPng {
    pub image: Image,
    pub alpha: Option<Vec<bool>>,
}

/// Decode 8/16-bit gray, gray-alpha, RGB or RGBA PNG data. Sub-byte gray
/// (e.g. 1-bit masks) is expanded to 8 bits first.
pub fn decode_png(bytes: &[u8]) -> Result<DecodedPng, ImageIoError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info()?;
    let mut raw = vec![0u8; reader.output_buffer_size().ok_or_else(|| ImageIoError::Unsupported("image too large".into()))?];
    let info = reader.next_frame(&mut raw)?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(ImageIoError::Unsupported(format!("{other:?}"))),
    };
    let sixteen = info.bit_depth == png::BitDepth::Sixteen;
    let sample = |idx: usize| -> f32 {
        if sixteen {
            u16::from_be_bytes([raw[2 * idx], raw[2 * idx + 1]]) as f32 / 65535.0
        } else {
            raw[idx] as f32 / 255.0
        }
    };
    let mut data = Vec::with_capacity(width * height);
    let has_alpha = channels == 2 || channels == 4;
    let mut alpha = has_alpha.then(|| Vec::with_capacity(width * height));
    let row_samples = info.line_size / if sixteen { 2 } else { 1 };
    for y in 0..height {
        for x in 0..width {
            let base = y * row_samples + x * channels;
            let px = match channels {
                1 | 2 => {
                    let g = sample(base);
                    [g, g, g]
                }
                _ => [sample(base), sample(base + 1), sample(base + 2)],
            };
            data.push(px);
            if let Some(a) = alpha.as_mut() {
                a.push(sample(base + channels - 1) > 0.5);
            }
        }
    }
    Ok(DecodedPng {
        image: Image { width, height, data },
        alpha,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ImageIoError> {
    let io_err = |source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)
}

pub fn read_png_file(path: impl AsRef<Path>) -> Result<DecodedPng, ImageIoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_png(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| [x as f32 / (w - 1) as f32, y as f32 / (h - 1) as f32, 0.25])
    }

    #[test]
    fn sixteen_bit_roundtrip_keeps_precision() {
        let img = ramp(17, 9);
        let flags: Vec<bool> = (0..img.data.len()).map(|i| i % 3 != 0).collect();
        let bytes = encode_png(&img, Some(&flags), Depth::Sixteen).unwrap();
        let back = decode_png(&bytes).unwrap();
        assert_eq!(back.alpha.as_deref(), Some(&flags[..]));
        for (a, b) in img.data.iter().zip(&back.image.data) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 0.5 / 65535.0 + 1e-7);
            }
        }
    }

    #[test]
    fn eight_bit_rgb_has_no_alpha() {
        let img = ramp(5, 4);
        let back = decode_png(&encode_png(&img, None, Depth::Eight).unwrap()).unwrap();
        assert!(back.alpha.is_none());
        assert!((back.image.get(4, 3)[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn one_bit_mask_roundtrip() {
        let flags: Vec<bool> = (0..(13 * 3)).map(|i| i % 5 == 0).collect();
        let back = decode_png(&encode_mask_png(13, 3, &flags).unwrap()).unwrap();
        let decoded: Vec<bool> = back.image.data.iter().map(|p| p[0] > 0.5).collect();
        assert_eq!(decoded, flags);
    }

    #[test]
    fn bilinear_hits_pixel_centers_exactly() {
        let img = ramp(8, 8);
        assert_eq!(img.sample_bilinear(3.5, 2.5), img.get(3, 2));
        let mid = img.sample_bilinear(4.0, 2.5);
        let expect = (img.get(3, 2)[0] + img.get(4, 2)[0]) / 2.0;
        assert!((mid[0] - expect).abs() < 1e-7);
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let img = ramp(4, 4);
        assert!(psnr(&img, &img, None).is_infinite());
        let mut other = img.clone();
        other.data[0][0] += 0.1;
        let p = psnr(&img, &other, None);
        // one channel of 48 off by 0.1 -> mse = 0.01 / 48
        assert!((p - (-10.0 * (0.01f64 / 48.0).log10())).abs() < 1e-4);
    }
}
