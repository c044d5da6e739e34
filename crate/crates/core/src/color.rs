//! sRGB <-> CIE L*a*b* conversion, normalization to the network's `[-1,1]`
//! ranges, and the image geometry pipeline (aspect-preserving resize onto a
//! white square, luminance stacking).
//!
//! Conversions use the D65 reference white and the standard two-piece sRGB
//! transfer curve, computed in `f64` per pixel and stored as `f32` planes.

use crate::tensor::Tensor;
use std::path::Path;
use thiserror::Error;

/// a*/b* values are treated as spanning `[-128, 128]` when scaled to `[-1, 1]`.
pub const CHROMA_SCALE: f32 = 128.0;

const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

// CIE thresholds: e = (6/29)^3, k = (29/3)^3
const CIE_E: f64 = 216.0 / 24389.0;
const CIE_K: f64 = 24389.0 / 27.0;

#[derive(Debug, Error)]
pub enum ColorError {
    #[error("empty image: zero width or height")]
    EmptyImage,
    #[error("pixel buffer length {got} does not match {width}x{height}")]
    PixelCount {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

/// 8-bit sRGB image, interleaved row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ColorError> {
        if width == 0 || height == 0 {
            return Err(ColorError::EmptyImage);
        }
        if pixels.len() != width * height * 3 {
            return Err(ColorError::PixelCount {
                width,
                height,
                got: pixels.len(),
            });
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Grayscale image holding L* values directly (0..100).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub l: Vec<f32>,
}

/// An image decomposed into its L*, a*, b* planes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub width: usize,
    pub height: usize,
    pub l: Vec<f32>,
    pub a: Vec<f32>,
    pub b: Vec<f32>,
}

/// Lab planes scaled to the network's `[-1, 1]` ranges:
/// `l = L/50 - 1`, `a = a*/128`, `b = b*/128`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPlanes {
    pub width: usize,
    pub height: usize,
    pub l: Vec<f32>,
    pub a: Vec<f32>,
    pub b: Vec<f32>,
}

impl NormalizedPlanes {
    /// Network input: `[1, H, W]`.
    pub fn luminance_tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![1, self.height, self.width], self.l.clone()).expect("plane sized")
    }

    /// Training target: `[2, H, W]`, a* plane then b* plane.
    pub fn chroma_tensor(&self) -> Tensor<f32> {
        let mut data = Vec::with_capacity(2 * self.l.len());
        data.extend_from_slice(&self.a);
        data.extend_from_slice(&self.b);
        Tensor::new(vec![2, self.height, self.width], data).expect("plane sized")
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > CIE_E {
        t.cbrt()
    } else {
        (CIE_K * t + 16.0) / 116.0
    }
}

pub fn srgb_to_lab(img: &RgbImage) -> LabImage {
    let n = img.width * img.height;
    let mut l = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for px in img.pixels.chunks_exact(3) {
        let rl = srgb_to_linear(px[0] as f64 / 255.0);
        let gl = srgb_to_linear(px[1] as f64 / 255.0);
        let bl = srgb_to_linear(px[2] as f64 / 255.0);
        let mut f = [0.0f64; 3];
        for (i, fi) in f.iter_mut().enumerate() {
            let component =
                SRGB_TO_XYZ[i][0] * rl + SRGB_TO_XYZ[i][1] * gl + SRGB_TO_XYZ[i][2] * bl;
            *fi = lab_f(component / D65_WHITE[i]);
        }
        // The 7-digit matrix rows do not sum to exactly 1, so white can land
        // a few 1e-6 above L=100; clamp to the declared plane ranges.
        l.push((116.0 * f[1] - 16.0).clamp(0.0, 100.0) as f32);
        a.push((500.0 * (f[0] - f[1])).clamp(-128.0, 128.0) as f32);
        b.push((200.0 * (f[1] - f[2])).clamp(-128.0, 128.0) as f32);
    }
    LabImage {
        width: img.width,
        height: img.height,
        l,
        a,
        b,
    }
}

/// Inverse conversion; out-of-gamut values are clamped to `[0, 255]` after
/// the transform.
pub fn lab_to_srgb(img: &LabImage) -> RgbImage {
    let mut pixels = Vec::with_capacity(img.width * img.height * 3);
    for i in 0..img.width * img.height {
        let (lv, av, bv) = (img.l[i] as f64, img.a[i] as f64, img.b[i] as f64);
        let fy = (lv + 16.0) / 116.0;
        let fx = fy + av / 500.0;
        let fz = fy - bv / 200.0;
        let xr = if fx * fx * fx > CIE_E {
            fx * fx * fx
        } else {
            (116.0 * fx - 16.0) / CIE_K
        };
        let yr = if lv > CIE_K * CIE_E {
            fy * fy * fy
        } else {
            lv / CIE_K
        };
        let zr = if fz * fz * fz > CIE_E {
            fz * fz * fz
        } else {
            (116.0 * fz - 16.0) / CIE_K
        };
        let xyz = [xr * D65_WHITE[0], yr * D65_WHITE[1], zr * D65_WHITE[2]];
        for row in &XYZ_TO_SRGB {
            let linear = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
            let v = (linear_to_srgb(linear) * 255.0).round();
            pixels.push(v.clamp(0.0, 255.0) as u8);
        }
    }
    RgbImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

pub fn normalize(img: &LabImage) -> NormalizedPlanes {
    NormalizedPlanes {
        width: img.width,
        height: img.height,
        l: img.l.iter().map(|&v| v / 50.0 - 1.0).collect(),
        a: img.a.iter().map(|&v| v / CHROMA_SCALE).collect(),
        b: img.b.iter().map(|&v| v / CHROMA_SCALE).collect(),
    }
}

pub fn denormalize(planes: &NormalizedPlanes) -> LabImage {
    LabImage {
        width: planes.width,
        height: planes.height,
        l: planes.l.iter().map(|&v| (v + 1.0) * 50.0).collect(),
        a: planes.a.iter().map(|&v| v * CHROMA_SCALE).collect(),
        b: planes.b.iter().map(|&v| v * CHROMA_SCALE).collect(),
    }
}

/// Scale so the longest side becomes `side` (bilinear, aspect preserved),
/// center on a white `side x side` canvas.
pub fn resize_with_padding(img: &RgbImage, side: usize) -> Result<RgbImage, ColorError> {
    if side == 0 {
        return Err(ColorError::EmptyImage);
    }
    let (w, h) = (img.width, img.height);
    let (cw, ch) = if w >= h {
        (side, ((h * side) as f64 / w as f64).round().max(1.0) as usize)
    } else {
        (((w * side) as f64 / h as f64).round().max(1.0) as usize, side)
    };
    // Resampling to the identical size must be exact, so skip the filter.
    let resized: Vec<u8> = if (cw, ch) == (w, h) {
        img.pixels.clone()
    } else {
        let buffer = image::RgbImage::from_raw(w as u32, h as u32, img.pixels.clone())
            .expect("validated pixel count");
        image::imageops::resize(
            &buffer,
            cw as u32,
            ch as u32,
            image::imageops::FilterType::Triangle,
        )
        .into_raw()
    };
    if (cw, ch) == (side, side) {
        return RgbImage::new(side, side, resized);
    }
    let mut pixels = vec![255u8; side * side * 3];
    let x0 = (side - cw) / 2;
    let y0 = (side - ch) / 2;
    for y in 0..ch {
        let src = &resized[y * cw * 3..][..cw * 3];
        let dst = ((y0 + y) * side + x0) * 3;
        pixels[dst..dst + cw * 3].copy_from_slice(src);
    }
    RgbImage::new(side, side, pixels)
}

/// Three identical copies of a luminance plane: `[3, H, W]`.
pub fn stack_luminance3(l: &[f32], height: usize, width: usize) -> Tensor<f32> {
    assert_eq!(l.len(), height * width, "plane size mismatch");
    let mut data = Vec::with_capacity(3 * l.len());
    for _ in 0..3 {
        data.extend_from_slice(l);
    }
    Tensor::new(vec![3, height, width], data).expect("sized above")
}

/// A decoded image file: either 8-bit sRGB or 8-bit grayscale, with
/// grayscale values interpreted directly as L* scaled from 0..255 to 0..100.
#[derive(Debug, Clone)]
pub enum LoadedImage {
    Rgb(RgbImage),
    Gray(GrayImage),
}

impl LoadedImage {
    pub fn dimensions(&self) -> (usize, usize) {
        match self {
            LoadedImage::Rgb(img) => (img.width, img.height),
            LoadedImage::Gray(img) => (img.width, img.height),
        }
    }

    pub fn to_lab(&self) -> LabImage {
        match self {
            LoadedImage::Rgb(img) => srgb_to_lab(img),
            LoadedImage::Gray(img) => LabImage {
                width: img.width,
                height: img.height,
                l: img.l.clone(),
                a: vec![0.0; img.l.len()],
                b: vec![0.0; img.l.len()],
            },
        }
    }

    /// Render as sRGB; grayscale becomes the neutral (a*=b*=0) rendering of
    /// its L* plane.
    pub fn to_rgb(&self) -> RgbImage {
        match self {
            LoadedImage::Rgb(img) => img.clone(),
            LoadedImage::Gray(img) => lab_to_srgb(&LabImage {
                width: img.width,
                height: img.height,
                l: img.l.clone(),
                a: vec![0.0; img.l.len()],
                b: vec![0.0; img.l.len()],
            }),
        }
    }
}

pub fn load_image(path: &Path) -> Result<LoadedImage, ColorError> {
    let decoded = image::open(path)?;
    let loaded = match decoded {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            if w == 0 || h == 0 {
                return Err(ColorError::EmptyImage);
            }
            LoadedImage::Gray(GrayImage {
                width: w,
                height: h,
                l: buf
                    .as_raw()
                    .iter()
                    .map(|&v| v as f32 * (100.0 / 255.0))
                    .collect(),
            })
        }
        image::DynamicImage::ImageLumaA8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            if w == 0 || h == 0 {
                return Err(ColorError::EmptyImage);
            }
            LoadedImage::Gray(GrayImage {
                width: w,
                height: h,
                l: buf
                    .as_raw()
                    .chunks_exact(2)
                    .map(|px| px[0] as f32 * (100.0 / 255.0))
                    .collect(),
            })
        }
        other => {
            let buf = other.to_rgb8();
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            LoadedImage::Rgb(RgbImage::new(w, h, buf.into_raw())?)
        }
    };
    Ok(loaded)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), ColorError> {
    let buffer =
        image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
            .expect("validated pixel count");
    buffer.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
