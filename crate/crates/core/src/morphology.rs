//! Flat-structuring-element morphology on interest maps and binary masks.
//!
//! Dilation takes `max f(x - s, y - t)` and erosion `min f(x + s, y + t)` over
//! the element offsets. Samples outside the image are ignored, which is the
//! same as padding with the identity of the respective lattice operation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{BinaryMask, InterestMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeShape {
    Disk(usize),
    Rect { width: usize, height: usize },
    Square(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    shape: SeShape,
    offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    /// `{(dx, dy) : dx^2 + dy^2 <= r^2}`.
    pub fn disk(radius: usize) -> Self {
        let r = radius as isize;
        let offsets = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        Self {
            shape: SeShape::Disk(radius),
            offsets,
        }
    }

    /// Axis-aligned rectangle anchored at its center (lower-left of center for even sides).
    pub fn rect(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("rectangle element needs positive sides"));
        }
        Ok(Self {
            shape: SeShape::Rect { width, height },
            offsets: rect_offsets(width, height),
        })
    }

    /// Odd-sided square centered on the origin.
    pub fn square(side: usize) -> Result<Self> {
        if side == 0 || side.is_multiple_of(2) {
            return Err(Error::arg(format!("square element side must be odd, got {side}")));
        }
        Ok(Self {
            shape: SeShape::Square(side),
            offsets: rect_offsets(side, side),
        })
    }

    pub fn shape(&self) -> SeShape {
        self.shape
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    pub fn is_symmetric(&self) -> bool {
        self.offsets.iter().all(|&(dx, dy)| self.offsets.contains(&(-dx, -dy)))
    }
}

fn rect_offsets(width: usize, height: usize) -> Vec<(isize, isize)> {
    let (w, h) = (width as isize, height as isize);
    let (x0, y0) = (-(w - 1) / 2, -(h - 1) / 2);
    (y0..y0 + h)
        .flat_map(|dy| (x0..x0 + w).map(move |dx| (dx, dy)))
        .collect()
}

/// Core neighborhood filter. `sign` is -1 for dilation (reflected element) and +1 for erosion.
fn neighborhood<T: Copy>(
    width: usize,
    height: usize,
    src: &[T],
    se: &StructuringElement,
    sign: isize,
    pick: impl Fn(T, T) -> T,
) -> Vec<T> {
    // (0, 0) is always in the element, so the source itself seeds the result.
    let mut out = src.to_vec();
    let (w, h) = (width as isize, height as isize);
    for &(dx, dy) in &se.offsets {
        let (sx, sy) = (sign * dx, sign * dy);
        if sx == 0 && sy == 0 {
            continue;
        }
        let y_lo = 0.max(-sy);
        let y_hi = h.min(h - sy);
        let x_lo = 0.max(-sx);
        let x_hi = w.min(w - sx);
        if y_lo >= y_hi || x_lo >= x_hi {
            continue;
        }
        for y in y_lo..y_hi {
            let dst_row = (y * w) as usize;
            let src_row = ((y + sy) * w) as usize;
            for x in x_lo..x_hi {
                let d = dst_row + x as usize;
                out[d] = pick(out[d], src[src_row + (x + sx) as usize]);
            }
        }
    }
    out
}

/// Images the operators act on.
pub trait Morphable: Sized {
    fn dilate(&self, se: &StructuringElement) -> Self;
    fn erode(&self, se: &StructuringElement) -> Self;

    fn open(&self, se: &StructuringElement) -> Self {
        self.erode(se).dilate(se)
    }

    fn close(&self, se: &StructuringElement) -> Self {
        self.dilate(se).erode(se)
    }
}

impl Morphable for InterestMap {
    fn dilate(&self, se: &StructuringElement) -> Self {
        let v = neighborhood(self.width(), self.height(), self.values(), se, -1, f64::max);
        InterestMap::from_raw(self.width(), self.height(), v)
    }

    fn erode(&self, se: &StructuringElement) -> Self {
        let v = neighborhood(self.width(), self.height(), self.values(), se, 1, f64::min);
        InterestMap::from_raw(self.width(), self.height(), v)
    }
}

impl Morphable for BinaryMask {
    fn dilate(&self, se: &StructuringElement) -> Self {
        let v = neighborhood(self.width(), self.height(), self.bits(), se, -1, |a, b| a || b);
        BinaryMask::from_bits(self.width(), self.height(), v).expect("same size")
    }

    fn erode(&self, se: &StructuringElement) -> Self {
        let v = neighborhood(self.width(), self.height(), self.bits(), se, 1, |a, b| a && b);
        BinaryMask::from_bits(self.width(), self.height(), v).expect("same size")
    }
}

pub fn dilate<M: Morphable>(m: &M, se: &StructuringElement) -> M {
    m.dilate(se)
}

pub fn erode<M: Morphable>(m: &M, se: &StructuringElement) -> M {
    m.erode(se)
}

pub fn open<M: Morphable>(m: &M, se: &StructuringElement) -> M {
    m.open(se)
}

pub fn close<M: Morphable>(m: &M, se: &StructuringElement) -> M {
    m.close(se)
}

/// Pointwise maximum of the closings with each disk radius (2 and 3 by default).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphologyParams {
    /// Disk radii of the closings whose maximum enhances the decision map.
    pub enhance_disk_radii: Vec<usize>,
    /// Side of the square opening that removes vessel fragments.
    pub vessel_se_side: usize,
}

impl Default for MorphologyParams {
    fn default() -> Self {
        Self {
            enhance_disk_radii: vec![2, 3],
            vessel_se_side: 5,
        }
    }
}

impl MorphologyParams {
    pub fn validate(&self) -> Result<()> {
        if self.enhance_disk_radii.is_empty() {
            return Err(Error::arg("morphology.enhance_disk_radii must not be empty"));
        }
        if self.vessel_se_side.is_multiple_of(2) {
            return Err(Error::arg("morphology.vessel_se_side must be odd"));
        }
        Ok(())
    }

    pub fn vessel_se(&self) -> Result<StructuringElement> {
        StructuringElement::square(self.vessel_se_side)
    }
}

pub fn enhance_interest_map(m: &InterestMap, disk_radii: &[usize]) -> Result<InterestMap> {
    let mut radii = disk_radii.iter();
    let first = radii
        .next()
        .ok_or_else(|| Error::arg("at least one enhancement disk radius is required"))?;
    let mut out = m.close(&StructuringElement::disk(*first));
    for &r in radii {
        out = out.pointwise_max(&m.close(&StructuringElement::disk(r)))?;
    }
    Ok(out)
}

/// Running min or max over a centered window of `side` samples along rows
/// (`stride == 1`) or columns, clipped at the borders.
fn sweep_1d(src: &[f64], w: usize, h: usize, side: usize, along_rows: bool, pick: fn(f64, f64) -> f64) -> Vec<f64> {
    let r = (side / 2) as isize;
    let mut out = vec![0.0; src.len()];
    let (len, lines) = if along_rows { (w, h) } else { (h, w) };
    for line in 0..lines {
        let at = |k: usize| if along_rows { line * w + k } else { k * w + line };
        for k in 0..len {
            let lo = (k as isize - r).max(0) as usize;
            let hi = ((k as isize + r) as usize).min(len - 1);
            out[at(k)] = (lo..=hi).map(|j| src[at(j)]).reduce(pick).expect("non-empty window");
        }
    }
    out
}

/// Grayscale opening by a `side x side` square, computed separably. Equal to
/// `open(m, &StructuringElement::square(side))`.
pub fn open_square(m: &InterestMap, side: usize) -> Result<InterestMap> {
    if side == 0 || side.is_multiple_of(2) {
        return Err(Error::arg(format!("square side must be odd, got {side}")));
    }
    let (w, h) = (m.width(), m.height());
    let eroded = sweep_1d(
        &sweep_1d(m.values(), w, h, side, true, f64::min),
        w,
        h,
        side,
        false,
        f64::min,
    );
    let opened = sweep_1d(
        &sweep_1d(&eroded, w, h, side, true, f64::max),
        w,
        h,
        side,
        false,
        f64::max,
    );
    InterestMap::new(w, h, opened)
}

/// `m - open_square(m, side)`: bright detail narrower than the square.
pub fn white_top_hat_square(m: &InterestMap, side: usize) -> Result<InterestMap> {
    let opened = open_square(m, side)?;
    let residue = m
        .values()
        .iter()
        .zip(opened.values())
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    InterestMap::new(m.width(), m.height(), residue)
}
