//! Browser bindings: generate or upload a photograph, detect and classify
//! exudates, and re-threshold interactively.

use retina_kit::classifier::{ExudateClass, SvmModel};
use retina_kit::evalharness::{generate_phantom, overlay, PhantomSpec};
use retina_kit::pipeline::{class_mask, classify, ThresholdStats};
use retina_kit::{BinaryMask, ColorSpace, Detection, Detector, PipelineConfig, RasterImage};
use wasm_bindgen::prelude::*;

const MODEL: &str = include_str!("../../cli/assets/phantom_model.json");

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba(img: &RasterImage) -> Vec<u8> {
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut out = Vec::with_capacity(img.width() * img.height() * 4);
    for y in 0..img.height() {
        for x in 0..img.width() {
            match img.space() {
                ColorSpace::Gray => {
                    let g = q(img.get(x, y, 0));
                    out.extend([g, g, g, 255]);
                }
                _ => out.extend([q(img.get(x, y, 0)), q(img.get(x, y, 1)), q(img.get(x, y, 2)), 255]),
            }
        }
    }
    out
}

#[wasm_bindgen]
pub struct Demo {
    detector: Detector,
    model: SvmModel,
    input: Option<RasterImage>,
    detection: Option<(Detection, ThresholdStats)>,
    hard: Option<BinaryMask>,
    soft: Option<BinaryMask>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsError> {
        Ok(Demo {
            detector: Detector::new(PipelineConfig::default()).map_err(js)?,
            model: SvmModel::from_json(MODEL).map_err(js)?,
            input: None,
            detection: None,
            hard: None,
            soft: None,
        })
    }

    /// Replaces the input with a synthetic photograph.
    pub fn phantom(&mut self, seed: u64) -> Result<(), JsError> {
        let p = generate_phantom(&PhantomSpec {
            seed,
            ..Default::default()
        })
        .map_err(js)?;
        self.set_input(p.image);
        Ok(())
    }

    /// Replaces the input with canvas pixels (RGBA, row-major).
    pub fn load_rgba(&mut self, width: usize, height: usize, data: &[u8]) -> Result<(), JsError> {
        if data.len() != width * height * 4 {
            return Err(JsError::new("pixel buffer does not match the dimensions"));
        }
        let planes: Vec<Vec<f64>> = (0..3)
            .map(|c| data.chunks_exact(4).map(|px| px[c] as f64 / 255.0).collect())
            .collect();
        let img = RasterImage::from_planes(width, height, ColorSpace::Rgb, &planes).map_err(js)?;
        self.set_input(img);
        Ok(())
    }

    fn set_input(&mut self, img: RasterImage) {
        self.input = Some(img);
        self.detection = None;
        self.hard = None;
        self.soft = None;
    }

    /// Runs detection and classification; returns a JSON summary.
    pub fn detect(&mut self) -> Result<String, JsError> {
        let img = self.input.as_ref().ok_or_else(|| JsError::new("no input image"))?;
        let det = self.detector.detect(img).map_err(js)?;
        let stats = self.detector.threshold_stats(&det).map_err(js)?;
        self.detection = Some((det, stats));
        self.reclassify(None)
    }

    /// Re-thresholds the stored decision map at Sauvola sensitivity `c`.
    pub fn rethreshold(&mut self, c: f64) -> Result<String, JsError> {
        self.reclassify(Some(c))
    }

    fn reclassify(&mut self, c: Option<f64>) -> Result<String, JsError> {
        let (det, stats) = self
            .detection
            .as_mut()
            .ok_or_else(|| JsError::new("run detection first"))?;
        if let Some(c) = c {
            if !(0.2..=0.5).contains(&c) {
                return Err(JsError::new("sensitivity must lie in [0.2, 0.5]"));
            }
            let mask = self.detector.candidates_at(det, stats, c).map_err(js)?;
            det.candidates = retina_kit::regions::connected_components(&mask);
            det.candidate_mask = mask;
        }
        let classified = classify(det, &self.model).map_err(js)?;
        let (w, h) = (det.width(), det.height());
        let hard = class_mask(&classified, ExudateClass::Hard, w, h);
        let soft = class_mask(&classified, ExudateClass::Soft, w, h);
        let count = |k: ExudateClass| classified.iter().filter(|r| r.prediction.class == k).count();
        let summary = serde_json::json!({
            "width": w,
            "height": h,
            "hard": count(ExudateClass::Hard),
            "soft": count(ExudateClass::Soft),
            "outlier": count(ExudateClass::Outlier),
            "hard_pixels": hard.count(),
            "soft_pixels": soft.count(),
        });
        self.hard = Some(hard);
        self.soft = Some(soft);
        Ok(summary.to_string())
    }

    /// RGBA pixels of a view: `input`, `overlay` or `dmap`.
    pub fn render(&self, view: &str) -> Result<Vec<u8>, JsError> {
        match view {
            "input" => Ok(rgba(self.input.as_ref().ok_or_else(|| JsError::new("no input image"))?)),
            "overlay" | "dmap" => {
                let (det, _) = self
                    .detection
                    .as_ref()
                    .ok_or_else(|| JsError::new("run detection first"))?;
                if view == "dmap" {
                    return Ok(rgba(&det.dmap.to_display()));
                }
                let (hard, soft) = (self.hard.as_ref().unwrap(), self.soft.as_ref().unwrap());
                Ok(rgba(&overlay(&det.working, hard, soft).map_err(js)?))
            }
            other => Err(JsError::new(&format!("unknown view `{other}`"))),
        }
    }

    /// Size of the rendered view.
    pub fn view_width(&self, view: &str) -> usize {
        match (view, &self.detection, &self.input) {
            ("input", _, Some(img)) => img.width(),
            (_, Some((det, _)), _) => det.width(),
            _ => 0,
        }
    }

    pub fn view_height(&self, view: &str) -> usize {
        match (view, &self.detection, &self.input) {
            ("input", _, Some(img)) => img.height(),
            (_, Some((det, _)), _) => det.height(),
            _ => 0,
        }
    }
}
