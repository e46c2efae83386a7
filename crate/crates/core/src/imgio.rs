//! Raster containers, PNG/PPM I/O, working-size resampling and CIELAB conversion.
//!
//! Every sample is a normalized `f64`: RGB and gray planes live in `[0, 1]`,
//! Lab planes keep their native ranges (`L` in `[0, 100]`, `a`/`b` roughly
//! `[-128, 127]`).

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageReader, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest side of the working image.
pub const WORKING_SIZE: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorSpace {
    Rgb,
    Lab,
    Gray,
}

impl ColorSpace {
    fn code(self) -> u8 {
        match self {
            ColorSpace::Rgb => 0,
            ColorSpace::Lab => 1,
            ColorSpace::Gray => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ColorSpace::Rgb),
            1 => Some(ColorSpace::Lab),
            2 => Some(ColorSpace::Gray),
            _ => None,
        }
    }
}

/// Multi-channel floating-point raster, row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    space: ColorSpace,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, space: ColorSpace, data: Vec<f64>) -> Result<Self> {
        let channels = match space {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb | ColorSpace::Lab => 3,
        };
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("empty raster {width}x{height}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::arg(format!(
                "raster data has {} samples, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("raster contains non-finite samples"));
        }
        if space != ColorSpace::Lab && data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg("RGB/gray samples must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            channels,
            space,
            data,
        })
    }

    /// Uniform image filled with `value` in every channel.
    pub fn filled(width: usize, height: usize, space: ColorSpace, value: &[f64]) -> Result<Self> {
        let channels = if space == ColorSpace::Gray { 1 } else { 3 };
        if value.len() != channels {
            return Err(Error::arg("fill value does not match channel count"));
        }
        let data = value.iter().copied().cycle().take(width * height * channels).collect();
        Self::new(width, height, space, data)
    }

    /// Builds an image from one plane per channel.
    pub fn from_planes(width: usize, height: usize, space: ColorSpace, planes: &[Vec<f64>]) -> Result<Self> {
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::arg("plane size mismatch"));
        }
        let mut data = Vec::with_capacity(n * planes.len());
        for i in 0..n {
            data.extend(planes.iter().map(|p| p[i]));
        }
        Self::new(width, height, space, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copies channel `c` out as a contiguous plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn planes(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    pub fn map_samples(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.space,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// One boolean per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::arg(format!(
                "mask has {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip(other, |a, b| a && b)
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn zip(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        if !self.same_dims(other) {
            return Err(Error::arg("mask dimensions differ"));
        }
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

/// Single-channel non-negative response grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InterestMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl InterestMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::arg(format!(
                "map has {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg("interest map values must be finite and non-negative"));
        }
        Ok(Self { width, height, values })
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self { width, height, values }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::from_raw(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Pointwise maximum of two maps of equal size.
    pub fn pointwise_max(&self, other: &InterestMap) -> Result<InterestMap> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::arg("map dimensions differ"));
        }
        Ok(Self::from_raw(
            self.width,
            self.height,
            self.values.iter().zip(&other.values).map(|(a, b)| a.max(*b)).collect(),
        ))
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Gray raster scaled so the map maximum is white.
    pub fn to_display(&self) -> RasterImage {
        let max = self.max_value();
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 1,
            space: ColorSpace::Gray,
            data: self.values.iter().map(|v| (v * scale).clamp(0.0, 1.0)).collect(),
        }
    }
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let reader = ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        Some(other) => return Err(format_err(path, format!("format {other:?} not supported"))),
        None => return Err(format_err(path, "unrecognized image format")),
    }
    reader.decode().map_err(|e| format_err(path, e))
}

fn is_16bit(img: &DynamicImage) -> bool {
    matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    )
}

/// Loads an 8- or 16-bit PNG or binary PPM as an RGB raster.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = if is_16bit(&img) {
        img.to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 65535.0)
            .collect()
    } else {
        img.to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 255.0)
            .collect()
    };
    RasterImage::new(w, h, ColorSpace::Rgb, data)
}

/// Loads a mask file; a pixel is set when its gray level exceeds 127.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = decode(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    BinaryMask::from_bits(w, h, img.into_raw().into_iter().map(|v| v > 127).collect())
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png(path: &Path, result: image::ImageResult<()>) -> Result<()> {
    result.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => format_err(path, other),
    })
}

/// Writes an RGB or gray raster as an 8-bit PNG.
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width as u32, img.height as u32);
    match img.space {
        ColorSpace::Rgb => {
            let raw: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
            let buf: ImageBuffer<Rgb<u8>, _> =
                ImageBuffer::from_raw(w, h, raw).expect("buffer size matches dimensions");
            write_png(path, buf.save_with_format(path, image::ImageFormat::Png))
        }
        ColorSpace::Gray => {
            let raw: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
            let buf: GrayImage = ImageBuffer::from_raw(w, h, raw).expect("buffer size matches dimensions");
            write_png(path, buf.save_with_format(path, image::ImageFormat::Png))
        }
        ColorSpace::Lab => Err(Error::arg("Lab rasters cannot be written as PNG; convert to RGB first")),
    }
}

/// Writes a mask as an 8-bit grayscale PNG with levels {0, 255}.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(mask.width as u32, mask.height as u32, raw).expect("buffer size matches dimensions");
    write_png(path, buf.save_with_format(path, image::ImageFormat::Png))
}

const RAW_MAGIC: &[u8; 4] = b"RKF1";

/// Lossless little-endian dump used for intermediates that must reload bit-exactly.
pub fn save_raw(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(17 + img.data.len() * 8);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(img.width as u32).to_le_bytes());
    out.extend_from_slice(&(img.height as u32).to_le_bytes());
    out.extend_from_slice(&(img.channels as u32).to_le_bytes());
    out.push(img.space.code());
    for v in &img.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 17 || &bytes[..4] != RAW_MAGIC {
        return Err(format_err(path, "not a raw raster dump"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (word(4), word(8), word(12));
    let space = ColorSpace::from_code(bytes[16]).ok_or_else(|| format_err(path, "bad color space"))?;
    let body = &bytes[17..];
    if body.len() != w * h * c * 8 {
        return Err(format_err(path, "truncated raw raster dump"));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    RasterImage::new(w, h, space, data)
}

pub fn save_raw_map(map: &InterestMap, path: impl AsRef<Path>) -> Result<()> {
    let img = RasterImage {
        width: map.width,
        height: map.height,
        channels: 1,
        space: ColorSpace::Gray,
        data: map.values.clone(),
    };
    save_raw(&img, path)
}

pub fn load_raw_map(path: impl AsRef<Path>) -> Result<InterestMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 17 || &bytes[..4] != RAW_MAGIC || bytes[16] != ColorSpace::Gray.code() {
        return Err(format_err(path, "not a raw interest-map dump"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let body = &bytes[17..];
    if word(12) != 1 || body.len() != w * h * 8 {
        return Err(format_err(path, "truncated raw interest-map dump"));
    }
    InterestMap::new(
        w,
        h,
        body.chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
    )
}

/// Catmull-Rom cubic weight (a = -0.5).
fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-index source taps and weights along one axis.
fn resample_taps(src_len: usize, dst_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = dst_len as f64 / src_len as f64;
    (0..dst_len)
        .map(|i| {
            let s = (i as f64 + 0.5) / scale - 0.5;
            let base = s.floor();
            let t = s - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let off = k as f64 - 1.0;
                let src = (base as i64 + k as i64 - 1).clamp(0, src_len as i64 - 1);
                idx[k] = src as usize;
                w[k] = cubic_weight(t - off);
            }
            (idx, w)
        })
        .collect()
}

/// Bicubic (Catmull-Rom, edge-clamped) resampling to an explicit size.
pub fn resize_to(img: &RasterImage, width: usize, height: usize) -> Result<RasterImage> {
    if width == 0 || height == 0 {
        return Err(Error::arg("target size must be positive"));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let ch = img.channels;
    let xt = resample_taps(img.width, width);
    let yt = resample_taps(img.height, height);

    let mut horiz = vec![0.0; width * img.height * ch];
    for y in 0..img.height {
        let row = &img.data[y * img.width * ch..(y + 1) * img.width * ch];
        for (x, (idx, w)) in xt.iter().enumerate() {
            for c in 0..ch {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += w[k] * row[idx[k] * ch + c];
                }
                horiz[(y * width + x) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; width * height * ch];
    for (y, (idx, w)) in yt.iter().enumerate() {
        for x in 0..width {
            for c in 0..ch {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += w[k] * horiz[(idx[k] * width + x) * ch + c];
                }
                out[(y * width + x) * ch + c] = acc;
            }
        }
    }
    if img.space != ColorSpace::Lab {
        for v in &mut out {
            *v = v.clamp(0.0, 1.0);
        }
    }
    RasterImage::new(width, height, img.space, out)
}

/// Output size for the working resolution: longest side becomes [`WORKING_SIZE`].
pub fn working_dims(width: usize, height: usize) -> (usize, usize) {
    let scale = WORKING_SIZE as f64 / width.max(height) as f64;
    let w = ((width as f64 * scale).round() as usize).max(1);
    let h = ((height as f64 * scale).round() as usize).max(1);
    (w, h)
}

/// Rescales so that the longest side is 400 px.
pub fn resize_for_processing(img: &RasterImage) -> Result<RasterImage> {
    if img.width < 8 || img.height < 8 {
        return Err(Error::arg(format!(
            "image {}x{} too small for processing (min 8x8)",
            img.width, img.height
        )));
    }
    let (w, h) = working_dims(img.width, img.height);
    resize_to(img, w, h)
}

/// Resamples a mask with the same cubic kernel, keeping pixels whose coverage exceeds one half.
pub fn resize_mask(mask: &BinaryMask, width: usize, height: usize) -> Result<BinaryMask> {
    if mask.width == width && mask.height == height {
        return Ok(mask.clone());
    }
    let gray = RasterImage::new(
        mask.width,
        mask.height,
        ColorSpace::Gray,
        mask.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )?;
    let r = resize_to(&gray, width, height)?;
    BinaryMask::from_bits(width, height, r.data.iter().map(|&v| v > 0.5).collect())
}

const WHITE_X: f64 = 0.95047;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.08883;
const LAB_EPS: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPS {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let f3 = f * f * f;
    if f3 > LAB_EPS {
        f3
    } else {
        (116.0 * f - 16.0) / LAB_KAPPA
    }
}

/// sRGB (D65) to CIELAB for a single pixel.
pub fn rgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (lab_f(x / WHITE_X), lab_f(y / WHITE_Y), lab_f(z / WHITE_Z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn lab_pixel_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let x = lab_f_inv(fx) * WHITE_X;
    let y = lab_f_inv(fy) * WHITE_Y;
    let z = lab_f_inv(fz) * WHITE_Z;
    let r = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    let g = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    let b = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
    [r, g, b].map(linear_to_srgb)
}

pub fn rgb_to_lab(img: &RasterImage) -> Result<RasterImage> {
    if img.space != ColorSpace::Rgb {
        return Err(Error::arg(format!("expected RGB input, got {:?}", img.space)));
    }
    let mut data = Vec::with_capacity(img.data.len());
    for px in img.data.chunks_exact(3) {
        data.extend_from_slice(&rgb_pixel_to_lab([px[0], px[1], px[2]]));
    }
    RasterImage::new(img.width, img.height, ColorSpace::Lab, data)
}

/// Inverse of [`rgb_to_lab`]; out-of-gamut results are clamped to `[0, 1]`.
pub fn lab_to_rgb(img: &RasterImage) -> Result<RasterImage> {
    if img.space != ColorSpace::Lab {
        return Err(Error::arg(format!("expected Lab input, got {:?}", img.space)));
    }
    let mut data = Vec::with_capacity(img.data.len());
    for px in img.data.chunks_exact(3) {
        data.extend(lab_pixel_to_rgb([px[0], px[1], px[2]]).map(|v| v.clamp(0.0, 1.0)));
    }
    RasterImage::new(img.width, img.height, ColorSpace::Rgb, data)
}

/// Extracts channel `idx` as a single-channel gray raster.
pub fn channel(img: &RasterImage, idx: usize) -> Result<RasterImage> {
    if idx >= img.channels {
        return Err(Error::arg(format!(
            "channel {idx} out of range for {}-channel image",
            img.channels
        )));
    }
    let plane = img.plane(idx);
    // Lab planes leave [0, 1]; they are carried unvalidated as gray.
    Ok(RasterImage {
        width: img.width,
        height: img.height,
        channels: 1,
        space: ColorSpace::Gray,
        data: plane,
    })
}
