//! Connected components, shape descriptors and geometric candidate filtering.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{BinaryMask, ColorSpace, RasterImage};

/// 8-neighborhood, clockwise in image coordinates (y down), starting west.
const DIRS: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    /// Inclusive.
    pub x1: usize,
    /// Inclusive.
    pub y1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: usize,
    /// Pixel coordinates `(x, y)` in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub area: usize,
    /// Length of the traced outer 8-boundary, diagonal steps counting sqrt(2).
    pub perimeter: f64,
    /// Number of lattice points inside the convex hull of the pixel centers.
    pub hull_area: f64,
    pub centroid: (f64, f64),
    pub bbox: BBox,
    pub eccentricity: f64,
    pub major_axis: f64,
    pub minor_axis: f64,
    pub extent: f64,
}

impl Region {
    pub fn from_pixels(label: usize, mut pixels: Vec<(usize, usize)>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::arg("region must contain at least one pixel"));
        }
        pixels.sort_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        let area = pixels.len();
        let n = area as f64;
        let mut bbox = BBox {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        };
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(x, y) in &pixels {
            bbox.x0 = bbox.x0.min(x);
            bbox.y0 = bbox.y0.min(y);
            bbox.x1 = bbox.x1.max(x);
            bbox.y1 = bbox.y1.max(y);
            sx += x as f64;
            sy += y as f64;
        }
        let (cx, cy) = (sx / n, sy / n);
        let (mut m20, mut m02, mut m11) = (0.0, 0.0, 0.0);
        for &(x, y) in &pixels {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            m20 += dx * dx;
            m02 += dy * dy;
            m11 += dx * dy;
        }
        // unit-square pixel extent adds 1/12 to each axis variance
        let (m20, m02, m11) = (m20 / n + 1.0 / 12.0, m02 / n + 1.0 / 12.0, m11 / n);
        let half_sum = (m20 + m02) / 2.0;
        let root = (((m20 - m02) / 2.0).powi(2) + m11 * m11).sqrt();
        let (l1, l2) = (half_sum + root, (half_sum - root).max(0.0));
        let eccentricity = (1.0 - l2 / l1).max(0.0).sqrt();

        let perimeter = trace_perimeter(&pixels, &bbox);
        let hull_area = lattice_hull_area(&pixels);
        Ok(Region {
            label,
            area,
            perimeter,
            hull_area,
            centroid: (cx, cy),
            extent: n / bbox.area() as f64,
            eccentricity,
            major_axis: 4.0 * l1.sqrt(),
            minor_axis: 4.0 * l2.sqrt(),
            bbox,
            pixels,
        })
    }

    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        for &(x, y) in &self.pixels {
            m.set(x, y, true);
        }
        m
    }
}

/// Label image for 8-connectivity; 0 is background, components numbered from 1 in raster order.
pub fn label_components(mask: &BinaryMask) -> (Vec<usize>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0usize; w * h];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in DIRS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits()[j] && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
    }
    (labels, next)
}

/// Labels the mask and computes descriptors for every component.
pub fn connected_components(mask: &BinaryMask) -> Vec<Region> {
    let w = mask.width();
    let (labels, count) = label_components(mask);
    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            groups[l - 1].push((i % w, i / w));
        }
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, px)| Region::from_pixels(i + 1, px).expect("components are non-empty"))
        .collect()
}

/// Length of the Moore-neighbor trace of the outer boundary.
fn trace_perimeter(pixels: &[(usize, usize)], bbox: &BBox) -> f64 {
    if pixels.len() == 1 {
        return 0.0;
    }
    // local grid with a one-pixel margin
    let gw = bbox.width() + 2;
    let gh = bbox.height() + 2;
    let mut grid = vec![false; gw * gh];
    for &(x, y) in pixels {
        grid[(y - bbox.y0 + 1) * gw + (x - bbox.x0 + 1)] = true;
    }
    let inside = |x: isize, y: isize| grid[y as usize * gw + x as usize];

    // first pixel in raster order; its west neighbor is background
    let (fx, fy) = pixels[0];
    let start = ((fx - bbox.x0 + 1) as isize, (fy - bbox.y0 + 1) as isize);
    let start_back = 0usize;

    // The trace is a deterministic walk on (pixel, backtrack) states; the
    // perimeter is the length of the cycle it settles into.
    let mut seen: HashMap<((isize, isize), usize), f64> = HashMap::new();
    let mut p = start;
    let mut back = start_back;
    let mut length = 0.0;
    loop {
        if let Some(at) = seen.insert((p, back), length) {
            return length - at;
        }
        let mut moved = false;
        for i in 1..=8 {
            let d = (back + i) % 8;
            let c = (p.0 + DIRS[d].0, p.1 + DIRS[d].1);
            if inside(c.0, c.1) {
                let prev = (back + i - 1) % 8;
                let b = (p.0 + DIRS[prev].0, p.1 + DIRS[prev].1);
                length += if DIRS[d].0 != 0 && DIRS[d].1 != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                p = c;
                back = DIRS
                    .iter()
                    .position(|&(dx, dy)| (p.0 + dx, p.1 + dy) == b)
                    .expect("backtrack cell neighbors the new pixel");
                moved = true;
                break;
            }
        }
        if !moved {
            return 0.0;
        }
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of integer points (counter-clockwise in a y-up frame, collinear points dropped).
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Pixel count of the digital convex hull via Pick's theorem: `A + B/2 + 1`.
pub fn lattice_hull_area(pixels: &[(usize, usize)]) -> f64 {
    // row extremes are enough to determine the hull
    let mut extremes: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    for &(x, y) in pixels {
        let e = extremes.entry(y).or_insert((x, x));
        e.0 = e.0.min(x);
        e.1 = e.1.max(x);
    }
    let pts: Vec<(i64, i64)> = extremes
        .iter()
        .flat_map(|(&y, &(a, b))| [(a as i64, y as i64), (b as i64, y as i64)])
        .collect();
    let hull = convex_hull(&pts);
    let n = hull.len();
    let mut twice_area = 0i64;
    let mut boundary = 0i64;
    for i in 0..n {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        twice_area += a.0 * b.1 - b.0 * a.1;
        boundary += gcd(b.0 - a.0, b.1 - a.1);
    }
    if n == 2 {
        // a segment is walked there and back
        boundary = 2 * gcd(hull[1].0 - hull[0].0, hull[1].1 - hull[0].1);
    }
    twice_area.abs() as f64 / 2.0 + boundary as f64 / 2.0 + 1.0
}

/// Region area over digital hull area.
pub fn solidity(r: &Region) -> f64 {
    r.area as f64 / r.hull_area
}

/// Raw `A / P^2`.
pub fn compactness(r: &Region) -> Result<f64> {
    if r.perimeter <= 0.0 {
        return Err(Error::arg("compactness undefined for zero perimeter"));
    }
    Ok(r.area as f64 / (r.perimeter * r.perimeter))
}

/// `4 pi A / P^2`, close to one for disks.
pub fn circularity(r: &Region) -> Result<f64> {
    Ok(4.0 * std::f64::consts::PI * compactness(r)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionParams {
    pub min_solidity: f64,
    pub max_circularity: f64,
    /// Pixels.
    pub min_area: usize,
    /// Fraction of the image area.
    pub max_area: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self {
            min_solidity: 0.2,
            max_circularity: 0.88,
            min_area: 4,
            max_area: 0.02,
        }
    }
}

impl RegionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_solidity) {
            return Err(Error::arg("regions.min_solidity must lie in [0, 1]"));
        }
        if !(self.max_circularity > 0.0) {
            return Err(Error::arg("regions.max_circularity must be > 0"));
        }
        if !(self.max_area > 0.0 && self.max_area <= 1.0) {
            return Err(Error::arg("regions.max_area is a fraction in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    TooSmall,
    TooLarge,
    LowSolidity,
    Flare,
    Dim,
}

/// Why a region fails the candidate rules, if it does.
pub fn rejection_reason(
    r: &Region,
    green_mean: f64,
    green: &[f64],
    width: usize,
    image_area: usize,
    p: &RegionParams,
) -> Option<Rejection> {
    if r.area < p.min_area {
        return Some(Rejection::TooSmall);
    }
    if r.area as f64 > p.max_area * image_area as f64 {
        return Some(Rejection::TooLarge);
    }
    if solidity(r) < p.min_solidity {
        return Some(Rejection::LowSolidity);
    }
    match circularity(r) {
        Ok(c) if c > p.max_circularity => return Some(Rejection::Flare),
        _ => {}
    }
    let mean = r.pixels.iter().map(|&(x, y)| green[y * width + x]).sum::<f64>() / r.area as f64;
    if mean <= green_mean + 1e-12 {
        return Some(Rejection::Dim);
    }
    None
}

/// Regions paired with their verdicts.
pub fn screen_candidates(regions: &[Region], img: &RasterImage, p: &RegionParams) -> Result<Vec<Option<Rejection>>> {
    p.validate()?;
    if img.space() != ColorSpace::Rgb {
        return Err(Error::arg("candidate screening expects the RGB working image"));
    }
    let green = img.plane(1);
    let green_mean = green.iter().sum::<f64>() / green.len() as f64;
    let area = img.width() * img.height();
    Ok(regions
        .iter()
        .map(|r| rejection_reason(r, green_mean, &green, img.width(), area, p))
        .collect())
}

/// Keeps regions that pass the size, solidity, flare and brightness rules.
pub fn filter_candidates(regions: &[Region], img: &RasterImage, p: &RegionParams) -> Result<Vec<Region>> {
    let verdicts = screen_candidates(regions, img, p)?;
    Ok(regions
        .iter()
        .zip(verdicts)
        .filter(|(_, v)| v.is_none())
        .map(|(r, _)| r.clone())
        .collect())
}
