//! Severity grading from exudate load in concentric bands around the fovea and
//! the optic disc.
//!
//! Each center carries four bands. Band `N` spans `r[N-1] < d <= r[N]` with
//! `r[0] = 0`, measured from the center to pixel centers, and its threshold is
//! `t[N] = A[N] / 16` where `A[N]` counts the band's pixels inside the image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::BinaryMask;
use crate::regions::Region;

pub const LEVELS: usize = 4;

/// Pixel position `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub f64, pub f64);

impl Point {
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        ((self.0 - x).powi(2) + (self.1 - y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetinalLandmarks {
    pub fovea: Point,
    pub optic_disc: Point,
    pub image_width: usize,
    pub image_height: usize,
}

impl RetinalLandmarks {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("fovea", self.fovea), ("optic disc", self.optic_disc)] {
            let inside = p.0.is_finite()
                && p.1.is_finite()
                && p.0 >= 0.0
                && p.1 >= 0.0
                && p.0 <= (self.image_width as f64 - 1.0)
                && p.1 <= (self.image_height as f64 - 1.0);
            if !inside {
                return Err(Error::arg(format!(
                    "{name} ({}, {}) lies outside the {}x{} image",
                    p.0, p.1, self.image_width, self.image_height
                )));
            }
        }
        Ok(())
    }

    /// Landmarks expressed for the same photograph resampled to `width x height`.
    pub fn rescaled(&self, width: usize, height: usize) -> RetinalLandmarks {
        let sx = width as f64 / self.image_width as f64;
        let sy = height as f64 / self.image_height as f64;
        let map = |p: Point| Point(p.0 * sx, p.1 * sy);
        RetinalLandmarks {
            fovea: map(self.fovea),
            optic_disc: map(self.optic_disc),
            image_width: width,
            image_height: height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityParams {
    /// Fovea ring spacing at the reference width.
    pub fovea_step: f64,
    /// Optic disc ring spacing at the reference width.
    pub optic_disc_step: f64,
    pub reference_width: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SeverityParams {
    fn default() -> Self {
        Self {
            fovea_step: 80.0,
            optic_disc_step: 55.0,
            reference_width: 1500.0,
            c1: 0.5,
            c2: 0.5,
        }
    }
}

impl SeverityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fovea_step > 0.0 && self.optic_disc_step > 0.0 && self.reference_width > 0.0) {
            return Err(Error::arg("severity ring spacing and reference width must be > 0"));
        }
        if !((0.0..=1.0).contains(&self.c1) && (0.0..=1.0).contains(&self.c2)) {
            return Err(Error::arg("severity weights c1, c2 must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Grade {
    None,
    Mild,
    Moderate,
    Severe,
    Proliferate,
}

impl Grade {
    pub fn name(self) -> &'static str {
        match self {
            Grade::None => "none",
            Grade::Mild => "mild",
            Grade::Moderate => "moderate",
            Grade::Severe => "severe",
            Grade::Proliferate => "proliferate",
        }
    }
}

impl std::fmt::Display for Grade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleSystem {
    pub center: Point,
    pub radii: [f64; LEVELS],
    pub band_areas: [usize; LEVELS],
    width: usize,
    height: usize,
}

impl CircleSystem {
    pub fn new(center: Point, radii: [f64; LEVELS], width: usize, height: usize) -> Result<Self> {
        if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("circle radii must be positive and strictly increasing"));
        }
        let mut sys = CircleSystem {
            center,
            radii,
            band_areas: [0; LEVELS],
            width,
            height,
        };
        let mut areas = [0usize; LEVELS];
        sys.for_each_band_pixel(|band, _, _| areas[band] += 1);
        if let Some(n) = areas.iter().position(|&a| a == 0) {
            return Err(Error::arg(format!("band {} has no pixels inside the image", n + 1)));
        }
        sys.band_areas = areas;
        Ok(sys)
    }

    /// Band index (0-based) of pixel `(x, y)`, or `None` beyond the outer ring.
    pub fn band_of(&self, x: usize, y: usize) -> Option<usize> {
        let d2 = (x as f64 - self.center.0).powi(2) + (y as f64 - self.center.1).powi(2);
        self.radii.iter().position(|r| d2 <= r * r)
    }

    pub fn thresholds(&self) -> [f64; LEVELS] {
        self.band_areas.map(|a| a as f64 / 16.0)
    }

    fn for_each_band_pixel(&self, mut f: impl FnMut(usize, usize, usize)) {
        let r = self.radii[LEVELS - 1];
        let x0 = (self.center.0 - r).floor().max(0.0) as usize;
        let y0 = (self.center.1 - r).floor().max(0.0) as usize;
        let x1 = ((self.center.0 + r).ceil() as usize).min(self.width - 1);
        let y1 = ((self.center.1 + r).ceil() as usize).min(self.height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if let Some(b) = self.band_of(x, y) {
                    f(b, x, y);
                }
            }
        }
    }

    /// Exudate pixels per band.
    pub fn band_counts(&self, mask: &BinaryMask) -> Result<[usize; LEVELS]> {
        if mask.width() != self.width || mask.height() != self.height {
            return Err(Error::arg(format!(
                "mask is {}x{}, circles were built for {}x{}",
                mask.width(),
                mask.height(),
                self.width,
                self.height
            )));
        }
        let mut n = [0usize; LEVELS];
        self.for_each_band_pixel(|b, x, y| {
            if mask.get(x, y) {
                n[b] += 1;
            }
        });
        Ok(n)
    }
}

/// Fovea and optic disc circle systems.
pub fn build_circles(lm: &RetinalLandmarks, p: &SeverityParams) -> Result<(CircleSystem, CircleSystem)> {
    lm.validate()?;
    p.validate()?;
    let s = lm.image_width as f64 / p.reference_width;
    let rings = |step: f64| [1.0, 2.0, 3.0, 4.0].map(|k| k * step * s);
    let fovea = CircleSystem::new(lm.fovea, rings(p.fovea_step), lm.image_width, lm.image_height)?;
    let od = CircleSystem::new(lm.optic_disc, rings(p.optic_disc_step), lm.image_width, lm.image_height)?;
    Ok((fovea, od))
}

/// The grading ladder on band counts `n` and thresholds `t`, innermost band first.
pub fn grade_counts(n: &[usize; LEVELS], t: &[f64; LEVELS]) -> Grade {
    let over = |i: usize| n[i] as f64 > t[i];
    let some = |i: usize| n[i] > 0 && !over(i);
    if over(0) {
        Grade::Proliferate
    } else if some(0) || over(1) {
        Grade::Severe
    } else if some(1) || over(2) {
        Grade::Moderate
    } else if some(2) || n[3] > 0 {
        Grade::Mild
    } else {
        Grade::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterGrade {
    pub grade: Grade,
    pub band_counts: [usize; LEVELS],
    pub band_areas: [usize; LEVELS],
    pub radii: [f64; LEVELS],
}

pub fn grade(mask: &BinaryMask, circles: &CircleSystem) -> Result<CenterGrade> {
    let n = circles.band_counts(mask)?;
    Ok(CenterGrade {
        grade: grade_counts(&n, &circles.thresholds()),
        band_counts: n,
        band_areas: circles.band_areas,
        radii: circles.radii,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityGrade {
    pub grade: Grade,
    pub fovea: CenterGrade,
    pub optic_disc: CenterGrade,
}

/// Grades both circle systems; the overall grade is the worse of the two.
pub fn grade_combined(mask: &BinaryMask, lm: &RetinalLandmarks, p: &SeverityParams) -> Result<SeverityGrade> {
    let (f, od) = build_circles(lm, p)?;
    let fovea = grade(mask, &f)?;
    let optic_disc = grade(mask, &od)?;
    Ok(SeverityGrade {
        grade: fovea.grade.max(optic_disc.grade),
        fovea,
        optic_disc,
    })
}

/// `c1 * A + c2 / D` per region, with `D` the centroid distance to the circle
/// center floored at one pixel.
pub fn severity_score(regions: &[Region], circles: &CircleSystem, p: &SeverityParams) -> Result<Vec<f64>> {
    p.validate()?;
    Ok(regions
        .iter()
        .map(|r| {
            let d = circles.center.distance(r.centroid.0, r.centroid.1).max(1.0);
            p.c1 * r.area as f64 + p.c2 / d
        })
        .collect())
}
