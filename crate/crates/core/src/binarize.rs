//! Sauvola local thresholding of an interest map.
//!
//! `th(x, y) = m(x, y) * (1 + c * (s(x, y) / S - 1))` where `m` and `s` are
//! the mean and standard deviation of the window centered on the pixel (edge
//! pixels replicated) and `S` is the largest window deviation in the image.
//! A pixel is set when its value is strictly above its threshold.
//!
//! On a map whose background is flat but not zero every background pixel
//! clears `m * (1 - c)`, so [`binarize`] also requires the value to exceed a
//! global floor `mean + k * std` taken over the region of interest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{BinaryMask, InterestMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SauvolaParams {
    pub window: usize,
    pub c: f64,
    /// `k` of the global floor; `None` leaves plain Sauvola.
    pub floor_sigmas: Option<f64>,
}

impl Default for SauvolaParams {
    fn default() -> Self {
        Self {
            window: 9,
            c: 0.35,
            floor_sigmas: Some(2.0),
        }
    }
}

impl SauvolaParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::arg(format!(
                "binarize.window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(0.2..=0.5).contains(&self.c) {
            return Err(Error::arg(format!("binarize.c must lie in [0.2, 0.5], got {}", self.c)));
        }
        if self.floor_sigmas.is_some_and(|k| !k.is_finite()) {
            return Err(Error::arg("binarize.floor_sigmas must be finite"));
        }
        Ok(())
    }
}

/// Summed-area tables of values and squared values over an edge-replicated
/// copy of the map padded by `pad` pixels on every side.
#[derive(Debug, Clone)]
pub struct IntegralStats {
    pad: usize,
    stride: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

/// Running sum with Neumaier compensation.
#[derive(Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn integral_stats(m: &InterestMap, pad: usize) -> IntegralStats {
    let (w, h) = (m.width(), m.height());
    let (pw, ph) = (w + 2 * pad, h + 2 * pad);
    let stride = pw + 1;
    let mut sum = vec![0.0; stride * (ph + 1)];
    let mut sum_sq = vec![0.0; stride * (ph + 1)];
    let mut col = vec![Compensated::default(); pw];
    let mut col_sq = vec![Compensated::default(); pw];
    for py in 0..ph {
        let sy = py.saturating_sub(pad).min(h - 1);
        let mut row = Compensated::default();
        let mut row_sq = Compensated::default();
        for px in 0..pw {
            let sx = px.saturating_sub(pad).min(w - 1);
            let v = m.get(sx, sy);
            row.add(v);
            row_sq.add(v * v);
            col[px].add(row.value());
            col_sq[px].add(row_sq.value());
            sum[(py + 1) * stride + px + 1] = col[px].value();
            sum_sq[(py + 1) * stride + px + 1] = col_sq[px].value();
        }
    }
    IntegralStats {
        pad,
        stride,
        sum,
        sum_sq,
    }
}

impl IntegralStats {
    /// Sum and sum of squares over the inclusive rectangle `[x0, x1] x [y0, y1]`
    /// given in unpadded map coordinates (may extend `pad` pixels outside).
    pub fn window(&self, x0: isize, y0: isize, x1: isize, y1: isize) -> (f64, f64) {
        let p = self.pad as isize;
        let (ax, ay) = ((x0 + p) as usize, (y0 + p) as usize);
        let (bx, by) = ((x1 + p + 1) as usize, (y1 + p + 1) as usize);
        let s = self.stride;
        let pick = |t: &[f64]| t[by * s + bx] - t[ay * s + bx] - t[by * s + ax] + t[ay * s + ax];
        (pick(&self.sum), pick(&self.sum_sq))
    }
}

/// Per-pixel window mean and deviation plus the image-wide maximum deviation.
#[derive(Debug, Clone)]
pub struct SauvolaStats {
    width: usize,
    height: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
    max_std: f64,
}

pub fn local_stats(m: &InterestMap, window: usize) -> Result<SauvolaStats> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::arg(format!("window must be odd and >= 3, got {window}")));
    }
    let (w, h) = (m.width(), m.height());
    if window > w || window > h {
        return Err(Error::arg(format!("window {window} larger than map {w}x{h}")));
    }
    let r = (window / 2) as isize;
    // shifting by the minimum keeps flat windows exact and limits cancellation
    let lo = m.values().iter().copied().fold(f64::INFINITY, f64::min);
    let shifted = InterestMap::from_raw(w, h, m.values().iter().map(|v| v - lo).collect());
    let table = integral_stats(&shifted, window / 2);
    let n = (window * window) as f64;
    let mut mean = Vec::with_capacity(w * h);
    let mut std = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (s, sq) = table.window(x - r, y - r, x + r, y + r);
            let mu = s / n;
            let var = (sq / n - mu * mu).max(0.0);
            mean.push(mu + lo);
            std.push(var.sqrt());
        }
    }
    let max_std = std.iter().copied().fold(0.0, f64::max);
    Ok(SauvolaStats {
        width: w,
        height: h,
        mean,
        std,
        max_std,
    })
}

impl SauvolaStats {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn max_std(&self) -> f64 {
        self.max_std
    }

    pub fn threshold_at(&self, i: usize, c: f64) -> f64 {
        self.mean[i] * (1.0 + c * (self.std[i] / self.max_std - 1.0))
    }

    /// Binarizes `m` (the map these statistics came from) with sensitivity `c`.
    pub fn apply(&self, m: &InterestMap, c: f64) -> BinaryMask {
        if self.max_std == 0.0 {
            return BinaryMask::new(self.width, self.height);
        }
        let bits = m
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| v > self.threshold_at(i, c))
            .collect();
        BinaryMask::from_bits(self.width, self.height, bits).expect("same size")
    }
}

pub fn sauvola_threshold(m: &InterestMap, p: &SauvolaParams) -> Result<BinaryMask> {
    p.validate()?;
    Ok(local_stats(m, p.window)?.apply(m, p.c))
}

/// `mean + k * std` of the map over `roi` (the whole map when `None`).
pub fn global_floor(m: &InterestMap, roi: Option<&BinaryMask>, k: f64) -> Result<f64> {
    if roi.is_some_and(|r| r.width() != m.width() || r.height() != m.height()) {
        return Err(Error::arg("region of interest and map differ in size"));
    }
    let inside = |i: usize| roi.is_none_or(|r| r.bits()[i]);
    let vals: Vec<f64> = m
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| inside(*i))
        .map(|(_, &v)| v)
        .collect();
    if vals.is_empty() {
        return Ok(f64::INFINITY);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(mean + k * var.sqrt())
}

/// Sauvola mask with sensitivity `c`, restricted to `roi` and, when
/// configured, to values above the global floor.
pub fn binarize_with(
    stats: &SauvolaStats,
    m: &InterestMap,
    roi: Option<&BinaryMask>,
    c: f64,
    floor: Option<f64>,
) -> BinaryMask {
    let mut mask = stats.apply(m, c);
    for (i, b) in mask.bits_mut().iter_mut().enumerate() {
        if roi.is_some_and(|r| !r.bits()[i]) || floor.is_some_and(|f| m.values()[i] <= f) {
            *b = false;
        }
    }
    mask
}

pub fn binarize(m: &InterestMap, roi: Option<&BinaryMask>, p: &SauvolaParams) -> Result<BinaryMask> {
    p.validate()?;
    let stats = local_stats(m, p.window)?;
    let floor = p.floor_sigmas.map(|k| global_floor(m, roi, k)).transpose()?;
    Ok(binarize_with(&stats, m, roi, p.c, floor))
}
