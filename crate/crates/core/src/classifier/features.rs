use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{BinaryMask, ColorSpace, RasterImage};
use crate::morphology::{Morphable, StructuringElement};
use crate::regions::{solidity, Region};

pub const FEATURE_DIM: usize = 22;

/// Width of the surrounding ring used for color contrast.
pub const CONTRAST_RING: usize = 3;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "area",
    "mean_r",
    "mean_g",
    "mean_b",
    "std_r",
    "std_g",
    "std_b",
    "mean_a",
    "mean_lab_b",
    "std_a",
    "std_lab_b",
    "eccentricity",
    "extent",
    "major_axis",
    "minor_axis",
    "convexity",
    "edge_gradient",
    "compactness",
    "energy",
    "contrast_r",
    "contrast_g",
    "contrast_b",
];

/// Region descriptor; index `i` holds feature `i + 1` of the table above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean central-difference gradient magnitude of `plane` over boundary pixels
/// (region pixels with a 4-neighbor outside the region).
pub fn mean_edge_gradient(r: &Region, plane: &[f64], width: usize, height: usize) -> f64 {
    let mask = r.to_mask(width, height);
    let inside = |x: isize, y: isize| {
        x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height && mask.get(x as usize, y as usize)
    };
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, width as isize - 1) as usize;
        let cy = y.clamp(0, height as isize - 1) as usize;
        plane[cy * width + cx]
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for &(x, y) in &r.pixels {
        let (x, y) = (x as isize, y as isize);
        let edge = [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|&(dx, dy)| !inside(x + dx, y + dy));
        if edge {
            let gx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
            let gy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
            total += (gx * gx + gy * gy).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Pixels within [`CONTRAST_RING`] of the region (disk dilation) but outside it.
pub fn contrast_ring(r: &Region, width: usize, height: usize) -> BinaryMask {
    let mask = r.to_mask(width, height);
    let grown = mask.dilate(&StructuringElement::disk(CONTRAST_RING));
    let mut ring = grown;
    for &(x, y) in &r.pixels {
        ring.set(x, y, false);
    }
    ring
}

/// Builds the 22-dimensional descriptor of a candidate region.
pub fn extract_features(r: &Region, img_rgb: &RasterImage, img_lab: &RasterImage) -> Result<FeatureVector> {
    if r.pixels.is_empty() {
        return Err(Error::arg("cannot describe an empty region"));
    }
    if img_rgb.space() != ColorSpace::Rgb || img_lab.space() != ColorSpace::Lab {
        return Err(Error::arg("feature extraction needs an RGB and a Lab image"));
    }
    let (w, h) = (img_rgb.width(), img_rgb.height());
    if img_lab.width() != w || img_lab.height() != h {
        return Err(Error::arg("RGB and Lab images differ in size"));
    }
    if r.pixels.iter().any(|&(x, y)| x >= w || y >= h) {
        return Err(Error::arg("region extends outside the image"));
    }
    let px = &r.pixels;
    let rgb_stats: Vec<(f64, f64)> = (0..3)
        .map(|c| mean_std(px.iter().map(move |&(x, y)| img_rgb.get(x, y, c))))
        .collect();
    let lab_stats: Vec<(f64, f64)> = (1..3)
        .map(|c| mean_std(px.iter().map(move |&(x, y)| img_lab.get(x, y, c))))
        .collect();

    let green = img_rgb.plane(1);
    let edge_gradient = mean_edge_gradient(r, &green, w, h);
    let compactness = r.area as f64 / r.perimeter.max(1.0).powi(2);
    let energy = px.iter().map(|&(x, y)| img_rgb.get(x, y, 1).powi(2)).sum::<f64>() / r.area as f64;

    let ring = contrast_ring(r, w, h);
    let ring_count = ring.count();
    let contrast: Vec<f64> = (0..3)
        .map(|c| {
            if ring_count == 0 {
                return 0.0;
            }
            let outside = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .filter(|&(x, y)| ring.get(x, y))
                .map(|(x, y)| img_rgb.get(x, y, c))
                .sum::<f64>()
                / ring_count as f64;
            rgb_stats[c].0 - outside
        })
        .collect();

    let f = [
        r.area as f64,
        rgb_stats[0].0,
        rgb_stats[1].0,
        rgb_stats[2].0,
        rgb_stats[0].1,
        rgb_stats[1].1,
        rgb_stats[2].1,
        lab_stats[0].0,
        lab_stats[1].0,
        lab_stats[0].1,
        lab_stats[1].1,
        r.eccentricity,
        r.extent,
        r.major_axis,
        r.minor_axis,
        solidity(r),
        edge_gradient,
        compactness,
        energy,
        contrast[0],
        contrast[1],
        contrast[2],
    ];
    let fv = FeatureVector(f);
    if !fv.is_finite() {
        return Err(Error::arg("feature vector is not finite"));
    }
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::rgb_to_lab;
    use crate::regions::connected_components;

    fn red_square_scene() -> (Region, RasterImage, RasterImage) {
        let (w, h) = (12, 12);
        let inside = |x: usize, y: usize| (4..8).contains(&x) && (4..8).contains(&y);
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if inside(x, y) {
                    data.extend([1.0, 0.0, 0.0]);
                } else {
                    data.extend([0.0, 0.0, 0.0]);
                }
            }
        }
        let img = RasterImage::new(w, h, ColorSpace::Rgb, data).unwrap();
        let lab = rgb_to_lab(&img).unwrap();
        let mask = BinaryMask::from_fn(w, h, inside);
        let r = connected_components(&mask).remove(0);
        (r, img, lab)
    }

    #[test]
    fn red_square_statistics() {
        let (r, img, lab) = red_square_scene();
        let f = extract_features(&r, &img, &lab).unwrap().0;
        assert_eq!(f[0], 16.0);
        assert_eq!((f[1], f[2], f[3]), (1.0, 0.0, 0.0));
        assert_eq!((f[4], f[5], f[6]), (0.0, 0.0, 0.0));
        assert_eq!(f[12], 1.0);
        assert!((f[19] - 1.0).abs() < 1e-12);
        assert!((f[13] - f[14]).abs() < 1e-9);
        assert!(f[11] < 0.3);
        assert!(f[15] > 0.0 && f[15] <= 1.05);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let (r, img, lab) = red_square_scene();
        assert!(extract_features(&r, &img, &img).is_err());
        let small = RasterImage::filled(3, 3, ColorSpace::Rgb, &[0.0, 0.0, 0.0]).unwrap();
        let small_lab = rgb_to_lab(&small).unwrap();
        assert!(extract_features(&r, &small, &small_lab).is_err());
        let _ = lab;
    }
}
