//! Camera aperture handling.
//!
//! Fundus photographs show the retina inside a dark circular aperture. The
//! aperture rim is the strongest edge in the image and would dominate every
//! coarse scale, so pixels outside it are filled by propagating the colors of
//! the nearest inside pixels before filtering.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{BinaryMask, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApertureParams {
    /// Fill the outside of the aperture before filtering.
    pub pad: bool,
    /// A pixel is inside the aperture when any channel exceeds this value.
    pub threshold: f64,
}

impl Default for ApertureParams {
    fn default() -> Self {
        Self {
            pad: true,
            threshold: 0.02,
        }
    }
}

impl ApertureParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::arg("aperture.threshold must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Pixels where any channel exceeds `threshold`.
pub fn field_of_view(img: &RasterImage, threshold: f64) -> BinaryMask {
    let ch = img.channels();
    let bits = img
        .data()
        .chunks(ch)
        .map(|px| px.iter().any(|&v| v > threshold))
        .collect();
    BinaryMask::from_bits(img.width(), img.height(), bits).expect("one bit per pixel")
}

/// Fills pixels outside `fov` ring by ring: each one takes the mean of its
/// already-known 8-neighbors. An empty aperture leaves the image unchanged.
pub fn pad_outside(img: &RasterImage, fov: &BinaryMask) -> Result<RasterImage> {
    let (w, h) = (img.width(), img.height());
    if fov.width() != w || fov.height() != h {
        return Err(Error::arg("aperture mask and image differ in size"));
    }
    if fov.count() == 0 || fov.count() == w * h {
        return Ok(img.clone());
    }
    let ch = img.channels();
    let mut data = img.data().to_vec();
    let mut known = fov.bits().to_vec();
    let neighbors = |i: usize| {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        (-1isize..=1)
            .flat_map(move |dy| (-1isize..=1).map(move |dx| (x + dx, y + dy)))
            .filter(move |&(nx, ny)| (nx, ny) != (x, y) && nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize)
            .map(move |(nx, ny)| ny as usize * w + nx as usize)
    };
    let mut queued = known.clone();
    let mut ring: VecDeque<usize> = VecDeque::new();
    for i in 0..w * h {
        if !known[i] && neighbors(i).any(|j| known[j]) {
            ring.push_back(i);
            queued[i] = true;
        }
    }
    while !ring.is_empty() {
        let current: Vec<usize> = ring.drain(..).collect();
        let mut fills = Vec::with_capacity(current.len());
        for &i in &current {
            let mut acc = vec![0.0; ch];
            let mut n = 0.0;
            for j in neighbors(i).filter(|&j| known[j]) {
                for c in 0..ch {
                    acc[c] += data[j * ch + c];
                }
                n += 1.0;
            }
            fills.push((i, acc.into_iter().map(|v| v / n).collect::<Vec<f64>>()));
        }
        for (i, v) in fills {
            data[i * ch..(i + 1) * ch].copy_from_slice(&v);
            known[i] = true;
        }
        for &i in &current {
            for j in neighbors(i) {
                if !queued[j] {
                    queued[j] = true;
                    ring.push_back(j);
                }
            }
        }
    }
    RasterImage::new(w, h, img.space(), data)
}
