//! Gaussian scale-space interest map.
//!
//! For every scale of the ladder `sigma_0 * k^n` two responses are computed
//! per color channel: a smoothed absolute first-derivative-of-Gaussian
//! response and an absolute difference-of-Gaussians response. The decision
//! map is the pointwise maximum over channels, filters and scales.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{ColorSpace, InterestMap, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSpaceParams {
    pub num_scales: usize,
    pub base_sigma: f64,
    pub k: f64,
    /// Multiply derivative responses by `sigma` and DoG responses by `1/(k-1)`.
    pub normalize: bool,
}

impl Default for ScaleSpaceParams {
    fn default() -> Self {
        Self {
            num_scales: 10,
            base_sigma: std::f64::consts::SQRT_2,
            k: std::f64::consts::SQRT_2,
            normalize: true,
        }
    }
}

impl ScaleSpaceParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_scales == 0 {
            return Err(Error::arg("scalespace.num_scales must be >= 1"));
        }
        if !(self.base_sigma > 0.0 && self.base_sigma.is_finite()) {
            return Err(Error::arg("scalespace.base_sigma must be > 0"));
        }
        if !(self.k > 1.0 && self.k.is_finite()) {
            return Err(Error::arg("scalespace.k must be > 1"));
        }
        Ok(())
    }

    /// The scale ladder, built by repeated multiplication.
    pub fn scales(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scales);
        let mut s = self.base_sigma;
        for _ in 0..self.num_scales {
            out.push(s);
            s *= self.k;
        }
        out
    }
}

/// Odd-length 1-D correlation kernel; `taps[i]` applies to offset `i - radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    pub radius: usize,
    pub taps: Vec<f64>,
}

impl Kernel1D {
    pub fn at(&self, offset: isize) -> f64 {
        self.taps[(offset + self.radius as isize) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("sigma must be > 0, got {sigma}")))
    }
}

/// Sampled Gaussian with half-width `ceil(3 sigma)`, normalized to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel1D> {
    check_sigma(sigma)?;
    let radius = (3.0 * sigma).ceil() as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(Kernel1D { radius, taps })
}

/// First-derivative-of-Gaussian taps `x G(x) / sigma^2` for correlation, so a
/// unit ramp maps to approximately one. Antisymmetric, hence zero-sum.
pub fn derivative_kernel(sigma: f64) -> Result<Kernel1D> {
    let g = gaussian_kernel(sigma)?;
    let r = g.radius as isize;
    let mut taps = g.taps.clone();
    for (i, t) in taps.iter_mut().enumerate() {
        *t *= (i as isize - r) as f64 / (sigma * sigma);
    }
    // exact antisymmetry
    for i in 0..g.radius {
        taps[2 * g.radius - i] = -taps[i];
    }
    taps[g.radius] = 0.0;
    Ok(Kernel1D { radius: g.radius, taps })
}

/// Correlates every row with `kernel`, replicating edge samples.
pub fn correlate_rows(src: &[f64], width: usize, height: usize, kernel: &Kernel1D) -> Vec<f64> {
    let r = kernel.radius;
    let mut out = vec![0.0; width * height];
    let mut padded = vec![0.0; width + 2 * r];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        padded[..r].fill(row[0]);
        padded[r..r + width].copy_from_slice(row);
        padded[r + width..].fill(row[width - 1]);
        let dst = &mut out[y * width..(y + 1) * width];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = padded[x..x + 2 * r + 1]
                .iter()
                .zip(&kernel.taps)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    out
}

/// Correlates every column with `kernel`, replicating edge samples.
pub fn correlate_cols(src: &[f64], width: usize, height: usize, kernel: &Kernel1D) -> Vec<f64> {
    let r = kernel.radius as isize;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let dst = &mut out[y * width..(y + 1) * width];
        for (k, &tap) in kernel.taps.iter().enumerate() {
            let sy = (y as isize + k as isize - r).clamp(0, height as isize - 1) as usize;
            let row = &src[sy * width..(sy + 1) * width];
            for (d, s) in dst.iter_mut().zip(row) {
                *d += tap * s;
            }
        }
    }
    out
}

/// Separable Gaussian blur of one plane.
pub fn gaussian_blur(plane: &[f64], width: usize, height: usize, sigma: f64) -> Result<Vec<f64>> {
    let g = gaussian_kernel(sigma)?;
    Ok(correlate_cols(
        &correlate_rows(plane, width, height, &g),
        width,
        height,
        &g,
    ))
}

fn single_plane(img: &RasterImage) -> Result<Vec<f64>> {
    if img.channels() != 1 {
        return Err(Error::arg("expected a single-channel image"));
    }
    Ok(img.plane(0))
}

fn derivative_plane(plane: &[f64], w: usize, h: usize, sigma: f64, normalize: bool) -> Result<Vec<f64>> {
    let g = gaussian_kernel(sigma)?;
    let d = derivative_kernel(sigma)?;
    let dx = correlate_rows(&correlate_cols(plane, w, h, &g), w, h, &d);
    let dy = correlate_cols(&correlate_rows(plane, w, h, &g), w, h, &d);
    let mag: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a.abs().max(b.abs())).collect();
    let mut smooth = correlate_cols(&correlate_rows(&mag, w, h, &g), w, h, &g);
    let scale = if normalize { sigma } else { 1.0 };
    for v in &mut smooth {
        *v = (*v * scale).max(0.0);
    }
    Ok(smooth)
}

fn dog_plane(plane: &[f64], w: usize, h: usize, sigma: f64, k: f64, normalize: bool) -> Result<Vec<f64>> {
    if !(k > 1.0) {
        return Err(Error::arg(format!("scale ratio k must be > 1, got {k}")));
    }
    let fine = gaussian_blur(plane, w, h, sigma)?;
    let coarse = gaussian_blur(plane, w, h, sigma * k)?;
    let scale = if normalize { 1.0 / (k - 1.0) } else { 1.0 };
    Ok(coarse.iter().zip(&fine).map(|(c, f)| (c - f).abs() * scale).collect())
}

/// `max(|dG/dx * I|, |dG/dy * I|)` smoothed by `G_sigma`, times `sigma` when normalized.
pub fn derivative_response(img1ch: &RasterImage, sigma: f64, normalize: bool) -> Result<InterestMap> {
    let plane = single_plane(img1ch)?;
    let (w, h) = (img1ch.width(), img1ch.height());
    Ok(InterestMap::from_raw(
        w,
        h,
        derivative_plane(&plane, w, h, sigma, normalize)?,
    ))
}

/// `|G_{k sigma} * I - G_sigma * I|`, divided by `k - 1` when normalized.
pub fn log_response(img1ch: &RasterImage, sigma: f64, k: f64, normalize: bool) -> Result<InterestMap> {
    let plane = single_plane(img1ch)?;
    let (w, h) = (img1ch.width(), img1ch.height());
    Ok(InterestMap::from_raw(
        w,
        h,
        dog_plane(&plane, w, h, sigma, k, normalize)?,
    ))
}

/// Interest map of one scale: maximum over channels and both filters.
pub fn scale_response(img: &RasterImage, sigma: f64, p: &ScaleSpaceParams) -> Result<InterestMap> {
    let (w, h) = (img.width(), img.height());
    let mut acc = vec![0.0f64; w * h];
    for plane in img.planes() {
        let deriv = derivative_plane(&plane, w, h, sigma, p.normalize)?;
        let dog = dog_plane(&plane, w, h, sigma, p.k, p.normalize)?;
        for ((a, d), l) in acc.iter_mut().zip(&deriv).zip(&dog) {
            *a = a.max(*d).max(*l);
        }
    }
    Ok(InterestMap::from_raw(w, h, acc))
}

/// Decision map: pointwise maximum of [`scale_response`] over the scale ladder.
pub fn build_gimap(img: &RasterImage, p: &ScaleSpaceParams) -> Result<InterestMap> {
    p.validate()?;
    if img.space() != ColorSpace::Rgb {
        return Err(Error::arg(format!(
            "decision map expects RGB input, got {:?}",
            img.space()
        )));
    }
    let scales = p.scales();
    #[cfg(feature = "parallel")]
    let maps: Vec<InterestMap> = scales
        .par_iter()
        .map(|&s| scale_response(img, s, p))
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let maps: Vec<InterestMap> = scales
        .iter()
        .map(|&s| scale_response(img, s, p))
        .collect::<Result<_>>()?;

    let mut it = maps.into_iter();
    let mut dmap = it.next().expect("at least one scale");
    for m in it {
        dmap = dmap.pointwise_max(&m)?;
    }
    Ok(dmap)
}
