//! Pixel-accurate lesion outlines grown from interest-map seeds.
//!
//! The decision map localizes lesions but its responses are blurred over
//! several pixels. Each seed component is regrown on the green top-hat
//! contrast (green minus its opening by a large square, i.e. brightness above
//! the local background): starting from the seed, neighbors are added while
//! their contrast exceeds half of the seed's peak contrast.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{BinaryMask, ColorSpace, InterestMap, RasterImage};
use crate::morphology::white_top_hat_square;
use crate::regions::Region;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    /// Regrow seeds on the contrast map; when off the seeds are used as is.
    pub enabled: bool,
    /// Side of the square whose opening estimates the background.
    pub background_side: usize,
    /// Seeds whose peak contrast stays below this are dropped.
    pub min_contrast: f64,
    /// Growth stays within the seed's bounding box widened by this many pixels.
    pub max_growth: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            enabled: true,
            background_side: 31,
            min_contrast: 0.04,
            max_growth: 20,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if self.background_side < 3 || self.background_side.is_multiple_of(2) {
            return Err(Error::arg("refine.background_side must be odd and >= 3"));
        }
        if !(self.min_contrast >= 0.0 && self.min_contrast < 1.0) {
            return Err(Error::arg("refine.min_contrast must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Green brightness above the local background.
pub fn green_contrast(img: &RasterImage, p: &RefineParams) -> Result<InterestMap> {
    if img.space() != ColorSpace::Rgb {
        return Err(Error::arg("contrast needs an RGB image"));
    }
    let green = InterestMap::new(img.width(), img.height(), img.plane(1))?;
    white_top_hat_square(&green, p.background_side)
}

/// Union of the regrown seeds.
pub fn grow_seeds(seeds: &[Region], contrast: &InterestMap, p: &RefineParams) -> BinaryMask {
    let (w, h) = (contrast.width(), contrast.height());
    let v = contrast.values();
    let mut out = BinaryMask::new(w, h);
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    for seed in seeds {
        let peak = seed.pixels.iter().map(|&(x, y)| v[y * w + x]).fold(0.0, f64::max);
        if peak < p.min_contrast || peak <= 0.0 {
            continue;
        }
        let level = peak / 2.0;
        let g = p.max_growth;
        let (x0, y0) = (seed.bbox.x0.saturating_sub(g), seed.bbox.y0.saturating_sub(g));
        let (x1, y1) = ((seed.bbox.x1 + g).min(w - 1), (seed.bbox.y1 + g).min(h - 1));
        let mut touched = Vec::new();
        for &(x, y) in &seed.pixels {
            let i = y * w + x;
            if v[i] > level && !visited[i] {
                visited[i] = true;
                touched.push(i);
                stack.push((x, y));
            }
        }
        while let Some((x, y)) = stack.pop() {
            out.set(x, y, true);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < x0 as isize || ny < y0 as isize || nx > x1 as isize || ny > y1 as isize {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    let i = ny * w + nx;
                    if !visited[i] && v[i] > level {
                        visited[i] = true;
                        touched.push(i);
                        stack.push((nx, ny));
                    }
                }
            }
        }
        // seeds may overlap the same lesion with different levels
        for i in touched {
            visited[i] = false;
        }
    }
    out
}
