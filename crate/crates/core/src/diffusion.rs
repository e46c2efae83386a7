//! Perona-Malik edge-preserving smoothing.
//!
//! Each channel evolves independently under an explicit flux-form update on
//! the 4-neighborhood. Fluxes across the image border are zero, so the
//! per-channel mean is conserved and, with `dt <= 0.25`, every update is a
//! convex combination of neighboring samples (no new extrema).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{ColorSpace, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionParams {
    /// Gradient scale in normalized-intensity units.
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub dt: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            k: 0.1,
            alpha: 1.0,
            iterations: 10,
            dt: 0.15,
        }
    }
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::arg(format!("diffusion.K must be > 0, got {}", self.k)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::arg(format!("diffusion.alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.dt > 0.0 && self.dt <= 0.25) {
            return Err(Error::arg(format!(
                "diffusion.dt must lie in (0, 0.25], got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Edge-stopping coefficient `1 / (1 + (g/K)^(1+alpha))`.
pub fn conductance(g: f64, k: f64, alpha: f64) -> Result<f64> {
    if !(g >= 0.0) {
        return Err(Error::arg(format!("gradient magnitude must be >= 0, got {g}")));
    }
    if !(k > 0.0) || !(alpha > 0.0) {
        return Err(Error::arg("K and alpha must be positive"));
    }
    Ok(conductance_unchecked(g, k, alpha))
}

#[inline]
fn conductance_unchecked(g: f64, k: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + (g / k).powf(1.0 + alpha))
}

/// One explicit step on a single plane; reads only `src`.
pub(crate) fn diffuse_step(src: &[f64], dst: &mut [f64], width: usize, height: usize, p: &DiffusionParams) {
    let c = |d: f64| conductance_unchecked(d.abs(), p.k, p.alpha);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let center = src[i];
            let mut flux = 0.0;
            if x > 0 {
                let d = src[i - 1] - center;
                flux += c(d) * d;
            }
            if x + 1 < width {
                let d = src[i + 1] - center;
                flux += c(d) * d;
            }
            if y > 0 {
                let d = src[i - width] - center;
                flux += c(d) * d;
            }
            if y + 1 < height {
                let d = src[i + width] - center;
                flux += c(d) * d;
            }
            dst[i] = center + p.dt * flux;
        }
    }
}

/// Runs `p.iterations` steps on a single plane.
pub fn diffuse_plane(plane: &[f64], width: usize, height: usize, p: &DiffusionParams) -> Result<Vec<f64>> {
    p.validate()?;
    if plane.len() != width * height {
        return Err(Error::arg("plane size mismatch"));
    }
    let mut cur = plane.to_vec();
    let mut next = vec![0.0; cur.len()];
    for _ in 0..p.iterations {
        diffuse_step(&cur, &mut next, width, height, p);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Smooths every channel of an RGB (or gray) image.
pub fn diffuse(img: &RasterImage, p: &DiffusionParams) -> Result<RasterImage> {
    p.validate()?;
    if img.space() == ColorSpace::Lab {
        return Err(Error::arg("diffusion expects an RGB or gray image"));
    }
    let (w, h) = (img.width(), img.height());
    let planes = img
        .planes()
        .iter()
        .map(|plane| diffuse_plane(plane, w, h, p).map(|v| v.into_iter().map(|s| s.clamp(0.0, 1.0)).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    RasterImage::from_planes(w, h, img.space(), &planes)
}
