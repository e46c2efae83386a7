//! End-to-end detection: every stage output is kept so callers can dump,
//! inspect or resume from any of them.

use serde::{Deserialize, Serialize};

use crate::aperture::{field_of_view, pad_outside};
use crate::binarize::{binarize_with, global_floor, local_stats, SauvolaStats};
use crate::classifier::{extract_features, ExudateClass, FeatureVector, LabeledSample, Prediction, SvmModel};
use crate::config::PipelineConfig;
use crate::diffusion::diffuse;
use crate::error::{Error, Result};
use crate::imgio::{resize_for_processing, rgb_to_lab, BinaryMask, ColorSpace, InterestMap, RasterImage};
use crate::morphology::{enhance_interest_map, Morphable};
use crate::refine::{green_contrast, grow_seeds};
use crate::regions::{connected_components, screen_candidates, Region, Rejection};
use crate::scalespace::build_gimap;

#[derive(Debug, Clone)]
pub struct Detection {
    /// Input resampled to the working size.
    pub working: RasterImage,
    /// Pixels inside the camera aperture.
    pub field_of_view: BinaryMask,
    pub diffused: RasterImage,
    pub dmap: InterestMap,
    pub enhanced: InterestMap,
    pub binarized: BinaryMask,
    /// Binarized map after the vessel opening.
    pub opened: BinaryMask,
    /// Green contrast used for regrowing; `None` when refinement is off.
    pub contrast: Option<InterestMap>,
    /// Opened mask after regrowing, the input of region screening.
    pub grown: BinaryMask,
    pub regions: Vec<Region>,
    /// Verdict per entry of `regions`; `None` means kept.
    pub verdicts: Vec<Option<Rejection>>,
    pub candidates: Vec<Region>,
    pub candidate_mask: BinaryMask,
}

impl Detection {
    pub fn width(&self) -> usize {
        self.working.width()
    }

    pub fn height(&self) -> usize {
        self.working.height()
    }
}

/// Binarization statistics of one detection, reusable across sensitivity values.
#[derive(Debug, Clone)]
pub struct ThresholdStats {
    pub sauvola: SauvolaStats,
    pub floor: Option<f64>,
}

struct Screened {
    grown: BinaryMask,
    regions: Vec<Region>,
    verdicts: Vec<Option<Rejection>>,
    candidates: Vec<Region>,
}

#[derive(Debug, Clone)]
pub struct Detector {
    config: PipelineConfig,
}

fn mask_of(regions: &[Region], width: usize, height: usize) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    for r in regions {
        for &(x, y) in &r.pixels {
            m.set(x, y, true);
        }
    }
    m
}

impl Detector {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Full pipeline on an RGB image of any size.
    pub fn detect(&self, img: &RasterImage) -> Result<Detection> {
        let working = resize_for_processing(img)?;
        self.detect_working(working)
    }

    /// Pipeline on an image already at the working size.
    pub fn detect_working(&self, working: RasterImage) -> Result<Detection> {
        if working.space() != ColorSpace::Rgb {
            return Err(Error::arg("detection expects an RGB image"));
        }
        let fov = field_of_view(&working, self.config.aperture.threshold);
        let diffused = if self.config.aperture.pad {
            diffuse(&pad_outside(&working, &fov)?, &self.config.diffusion)?
        } else {
            diffuse(&working, &self.config.diffusion)?
        };
        let dmap = build_gimap(&diffused, &self.config.scalespace)?;
        self.resume_from_dmap(working, diffused, dmap)
    }

    /// Continues from a previously computed diffused image and decision map.
    pub fn resume_from_dmap(
        &self,
        working: RasterImage,
        diffused: RasterImage,
        dmap: InterestMap,
    ) -> Result<Detection> {
        let (w, h) = (working.width(), working.height());
        if dmap.width() != w || dmap.height() != h || diffused.width() != w || diffused.height() != h {
            return Err(Error::arg("decision map, diffused and working image differ in size"));
        }
        if diffused.space() != ColorSpace::Rgb {
            return Err(Error::arg("diffused image must be RGB"));
        }
        let field_of_view = field_of_view(&working, self.config.aperture.threshold);
        let enhanced = enhance_interest_map(&dmap, &self.config.morphology.enhance_disk_radii)?;
        let stats = self.threshold_stats_of(&enhanced, &field_of_view)?;
        let binarized = binarize_with(
            &stats.sauvola,
            &enhanced,
            Some(&field_of_view),
            self.config.binarize.c,
            stats.floor,
        );
        let opened = binarized.open(&self.config.morphology.vessel_se()?);
        let contrast = if self.config.refine.enabled {
            Some(green_contrast(&diffused, &self.config.refine)?)
        } else {
            None
        };
        let s = self.screen(&opened, contrast.as_ref(), &diffused)?;
        let candidate_mask = mask_of(&s.candidates, w, h);
        Ok(Detection {
            working,
            field_of_view,
            diffused,
            dmap,
            enhanced,
            binarized,
            opened,
            contrast,
            grown: s.grown,
            regions: s.regions,
            verdicts: s.verdicts,
            candidates: s.candidates,
            candidate_mask,
        })
    }

    fn threshold_stats_of(&self, enhanced: &InterestMap, fov: &BinaryMask) -> Result<ThresholdStats> {
        let p = &self.config.binarize;
        Ok(ThresholdStats {
            sauvola: local_stats(enhanced, p.window)?,
            floor: p
                .floor_sigmas
                .map(|k| global_floor(enhanced, Some(fov), k))
                .transpose()?,
        })
    }

    fn screen(&self, opened: &BinaryMask, contrast: Option<&InterestMap>, diffused: &RasterImage) -> Result<Screened> {
        let grown = match contrast {
            Some(c) => grow_seeds(&connected_components(opened), c, &self.config.refine),
            None => opened.clone(),
        };
        let regions = connected_components(&grown);
        let verdicts = screen_candidates(&regions, diffused, &self.config.regions)?;
        let candidates = regions
            .iter()
            .zip(&verdicts)
            .filter(|(_, v)| v.is_none())
            .map(|(r, _)| r.clone())
            .collect();
        Ok(Screened {
            grown,
            regions,
            verdicts,
            candidates,
        })
    }

    pub fn threshold_stats(&self, det: &Detection) -> Result<ThresholdStats> {
        self.threshold_stats_of(&det.enhanced, &det.field_of_view)
    }

    /// Candidate mask for Sauvola sensitivity `c`, all other settings unchanged.
    pub fn candidates_at(&self, det: &Detection, stats: &ThresholdStats, c: f64) -> Result<BinaryMask> {
        let opened = binarize_with(&stats.sauvola, &det.enhanced, Some(&det.field_of_view), c, stats.floor)
            .open(&self.config.morphology.vessel_se()?);
        let s = self.screen(&opened, det.contrast.as_ref(), &det.diffused)?;
        Ok(mask_of(&s.candidates, det.width(), det.height()))
    }
}

/// Features of every candidate region.
pub fn candidate_features(det: &Detection) -> Result<Vec<FeatureVector>> {
    let lab = rgb_to_lab(&det.diffused)?;
    det.candidates
        .iter()
        .map(|r| extract_features(r, &det.diffused, &lab))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifiedRegion {
    pub region: Region,
    pub features: FeatureVector,
    pub prediction: Prediction,
}

pub fn classify(det: &Detection, model: &SvmModel) -> Result<Vec<ClassifiedRegion>> {
    let features = candidate_features(det)?;
    det.candidates
        .iter()
        .zip(features)
        .map(|(r, f)| {
            Ok(ClassifiedRegion {
                region: r.clone(),
                prediction: model.predict(f.as_slice())?,
                features: f,
            })
        })
        .collect()
}

/// Union of regions predicted as `class`.
pub fn class_mask(classified: &[ClassifiedRegion], class: ExudateClass, width: usize, height: usize) -> BinaryMask {
    let regions: Vec<Region> = classified
        .iter()
        .filter(|c| c.prediction.class == class)
        .map(|c| c.region.clone())
        .collect();
    mask_of(&regions, width, height)
}

/// Ground-truth masks at the working size.
#[derive(Debug, Clone)]
pub struct TruthMasks {
    pub exudate: BinaryMask,
    pub hard: Option<BinaryMask>,
    pub soft: Option<BinaryMask>,
}

fn share_in(r: &Region, m: &BinaryMask) -> f64 {
    r.pixels.iter().filter(|&&(x, y)| m.get(x, y)).count() as f64 / r.area as f64
}

/// Hard or Soft when more than half of the region lies in that class mask,
/// else Outlier. Without class masks the exudate mask stands in for Hard.
pub fn label_region(r: &Region, truth: &TruthMasks) -> ExudateClass {
    match (&truth.hard, &truth.soft) {
        (None, None) => {
            if share_in(r, &truth.exudate) > 0.5 {
                ExudateClass::Hard
            } else {
                ExudateClass::Outlier
            }
        }
        (hard, soft) => {
            if hard.as_ref().is_some_and(|m| share_in(r, m) > 0.5) {
                ExudateClass::Hard
            } else if soft.as_ref().is_some_and(|m| share_in(r, m) > 0.5) {
                ExudateClass::Soft
            } else {
                ExudateClass::Outlier
            }
        }
    }
}

/// Labeled feature vectors of all candidates of one image.
pub fn training_samples(det: &Detection, truth: &TruthMasks) -> Result<Vec<LabeledSample>> {
    let features = candidate_features(det)?;
    Ok(det
        .candidates
        .iter()
        .zip(features)
        .map(|(r, f)| LabeledSample::new(f.0.to_vec(), label_region(r, truth)))
        .collect())
}
