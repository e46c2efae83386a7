//! Pixel-level evaluation, dataset manifests, reports and synthetic phantoms.

pub mod metrics;
pub mod phantom;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use metrics::{
    confusion, rates, roc_exact, roc_from_counts, roc_sweep, ConfusionCounts, Rates, RocCurve, RocPoint,
};
pub use phantom::{generate_phantom, Phantom, PhantomSpec};

pub use crate::aperture::field_of_view;

use crate::classifier::{ExudateClass, SvmModel};
use crate::error::{Error, Result};
use crate::imgio::{load_image, load_mask, resize_mask, save_image, save_mask, BinaryMask, RasterImage};
use crate::pipeline::{class_mask, classify, Detection, Detector, TruthMasks};
use crate::severity::{grade_combined, Grade, Point, RetinalLandmarks};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Score only pixels inside the camera aperture.
    pub field_of_view: bool,
    pub sweep_min: f64,
    pub sweep_max: f64,
    pub sweep_steps: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            field_of_view: true,
            sweep_min: 0.2,
            sweep_max: 0.5,
            sweep_steps: 31,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.2 <= self.sweep_min && self.sweep_min <= self.sweep_max && self.sweep_max <= 0.5) {
            return Err(Error::arg("eval sweep must lie within the Sauvola range [0.2, 0.5]"));
        }
        if self.sweep_steps < 2 {
            return Err(Error::arg("eval.sweep_steps must be at least 2"));
        }
        Ok(())
    }

    /// Evenly spaced Sauvola sensitivities.
    pub fn sweep_values(&self) -> Vec<f64> {
        let n = self.sweep_steps;
        (0..n)
            .map(|i| self.sweep_min + (self.sweep_max - self.sweep_min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub exudate_mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fovea: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optic_disc: Option<Point>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    /// Directory that relative paths are resolved against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, entries })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.entries)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Loaded manifest entry with masks at the working size of its image.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub image: RasterImage,
    pub truth: TruthMasks,
    pub landmarks: Option<RetinalLandmarks>,
}

/// Reads the image and masks of one entry; masks are resampled to the working size.
pub fn load_sample(manifest: &Manifest, entry: &ManifestEntry) -> Result<Sample> {
    let image = load_image(manifest.resolve(&entry.image))?;
    let (w, h) = crate::imgio::working_dims(image.width(), image.height());
    let mask_at = |p: &Path| -> Result<BinaryMask> {
        let full = manifest.resolve(p);
        let m = load_mask(&full)?;
        if m.width() != image.width() || m.height() != image.height() {
            return Err(Error::Format {
                path: full,
                message: format!("mask size differs from image {}x{}", image.width(), image.height()),
            });
        }
        resize_mask(&m, w, h)
    };
    let truth = TruthMasks {
        exudate: mask_at(&entry.exudate_mask)?,
        hard: entry.hard_mask.as_deref().map(&mask_at).transpose()?,
        soft: entry.soft_mask.as_deref().map(&mask_at).transpose()?,
    };
    let landmarks = match (entry.fovea, entry.optic_disc) {
        (Some(fovea), Some(optic_disc)) => {
            let lm = RetinalLandmarks {
                fovea,
                optic_disc,
                image_width: image.width(),
                image_height: image.height(),
            };
            lm.validate()?;
            Some(lm)
        }
        _ => None,
    };
    let name = entry
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    Ok(Sample {
        name,
        image,
        truth,
        landmarks,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageReport {
    pub image: String,
    pub counts: ConfusionCounts,
    pub rates: Rates,
    /// AUC of the raw decision map as a pixel score.
    pub score_auc: Option<f64>,
    pub regions: usize,
    pub grade: Option<Grade>,
    /// Detection time in seconds, recorded only when timing was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
    /// Candidate counts for each swept sensitivity, when a sweep was requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<(f64, ConfusionCounts)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryError {
    pub image: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: Vec<ImageReport>,
    pub errors: Vec<EntryError>,
    /// Sum of per-image counts.
    pub counts: ConfusionCounts,
    /// Rates of the summed counts.
    pub rates: Rates,
    /// Decision-map score ROC pooled over all evaluated pixels.
    pub score_roc: Option<RocCurve>,
    /// ROC over the Sauvola sensitivity sweep, pooled over images.
    pub sweep_roc: Option<RocCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_runtime_s: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub sweep: bool,
    pub overlay_dir: Option<PathBuf>,
    pub model: Option<SvmModel>,
    /// Record per-image runtimes; off keeps reports byte-reproducible.
    pub timing: bool,
}

/// Detection output used for scoring: classified Hard/Soft regions with a
/// model, otherwise every candidate.
pub fn predicted_mask(
    det: &Detection,
    model: Option<&SvmModel>,
) -> Result<(BinaryMask, Option<(BinaryMask, BinaryMask)>)> {
    match model {
        None => Ok((det.candidate_mask.clone(), None)),
        Some(m) => {
            let classified = classify(det, m)?;
            let hard = class_mask(&classified, ExudateClass::Hard, det.width(), det.height());
            let soft = class_mask(&classified, ExudateClass::Soft, det.width(), det.height());
            Ok((hard.union(&soft)?, Some((hard, soft))))
        }
    }
}

struct ImageOutcome {
    report: ImageReport,
    scores: Vec<f64>,
    labels: Vec<bool>,
}

fn evaluate_sample(detector: &Detector, sample: &Sample, opts: &EvalOptions) -> Result<ImageOutcome> {
    let cfg = detector.config();
    let start = Instant::now();
    let det = detector.detect(&sample.image)?;
    let (pred, classes) = predicted_mask(&det, opts.model.as_ref())?;
    let runtime_s = start.elapsed().as_secs_f64();

    let universe = cfg.eval.field_of_view.then(|| det.field_of_view.clone());
    let truth = &sample.truth.exudate;
    let counts = confusion(&pred, truth, universe.as_ref())?;

    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, &s) in det.dmap.values().iter().enumerate() {
        if universe.as_ref().is_none_or(|u| u.bits()[i]) {
            scores.push(s);
            labels.push(truth.bits()[i]);
        }
    }
    let score_auc = roc_exact(&scores, &labels).ok().map(|r| r.auc);

    let sweep = if opts.sweep {
        let stats = detector.threshold_stats(&det)?;
        cfg.eval
            .sweep_values()
            .into_iter()
            .map(|c| {
                let m = detector.candidates_at(&det, &stats, c)?;
                Ok((c, confusion(&m, truth, universe.as_ref())?))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let grade = match &sample.landmarks {
        Some(lm) => {
            let lm = lm.rescaled(det.width(), det.height());
            Some(grade_combined(&pred, &lm, &cfg.severity)?.grade)
        }
        None => None,
    };

    if let Some(dir) = &opts.overlay_dir {
        let (hard, soft) = classes.unwrap_or_else(|| (pred.clone(), BinaryMask::new(det.width(), det.height())));
        let img = overlay(&det.working, &hard, &soft)?;
        let tag = grade.map_or("ungraded", Grade::name);
        save_image(&img, dir.join(format!("{}_{}.png", sample.name, tag)))?;
    }

    Ok(ImageOutcome {
        report: ImageReport {
            image: sample.name.clone(),
            counts,
            rates: rates(&counts),
            score_auc,
            regions: det.candidates.len(),
            grade,
            runtime_s: opts.timing.then_some(runtime_s),
            sweep,
        },
        scores,
        labels,
    })
}

/// Hard-lesion outlines in cyan, soft in magenta.
pub fn overlay(img: &RasterImage, hard: &BinaryMask, soft: &BinaryMask) -> Result<RasterImage> {
    let (w, h) = (img.width(), img.height());
    let mut planes = img.planes();
    let outline = |m: &BinaryMask, x: usize, y: usize| {
        m.get(x, y)
            && [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize || !m.get(nx as usize, ny as usize)
            })
    };
    for y in 0..h {
        for x in 0..w {
            let color = if outline(hard, x, y) {
                Some([0.0, 1.0, 1.0])
            } else if outline(soft, x, y) {
                Some([1.0, 0.0, 1.0])
            } else {
                None
            };
            if let Some(c) = color {
                for (p, v) in planes.iter_mut().zip(c) {
                    p[y * w + x] = v;
                }
            }
        }
    }
    RasterImage::from_planes(w, h, img.space(), &planes)
}

#[cfg(feature = "parallel")]
fn map_entries<T: Send>(entries: &[ManifestEntry], f: impl Fn(&ManifestEntry) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    entries.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_entries<T: Send>(entries: &[ManifestEntry], f: impl Fn(&ManifestEntry) -> T + Sync + Send) -> Vec<T> {
    entries.iter().map(f).collect()
}

/// Runs the pipeline on every manifest entry. Entries that fail are recorded
/// and skipped; results keep manifest order.
pub fn evaluate_dataset(manifest: &Manifest, detector: &Detector, opts: &EvalOptions) -> Result<EvalReport> {
    if let Some(dir) = &opts.overlay_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let outcomes = map_entries(&manifest.entries, |entry| {
        load_sample(manifest, entry).and_then(|s| evaluate_sample(detector, &s, opts))
    });
    let mut images = Vec::new();
    let mut errors = Vec::new();
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (entry, outcome) in manifest.entries.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                scores.extend(o.scores);
                labels.extend(o.labels);
                images.push(o.report);
            }
            Err(e) => {
                log::warn!("{}: {e}", entry.image.display());
                errors.push(EntryError {
                    image: entry.image.display().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    let counts: ConfusionCounts = images.iter().map(|r| r.counts).sum();
    let score_roc = roc_exact(&scores, &labels).ok();
    let sweep_roc = if opts.sweep && !images.is_empty() {
        let pooled: Vec<(f64, ConfusionCounts)> = detector
            .config()
            .eval
            .sweep_values()
            .into_iter()
            .enumerate()
            .map(|(k, c)| (c, images.iter().map(|r| r.sweep[k].1).sum()))
            .collect();
        roc_from_counts(&pooled).ok()
    } else {
        None
    };
    let timed: Vec<f64> = images.iter().filter_map(|r| r.runtime_s).collect();
    let mean_runtime_s = (!timed.is_empty()).then(|| timed.iter().sum::<f64>() / timed.len() as f64);
    Ok(EvalReport {
        rates: rates(&counts),
        images,
        errors,
        counts,
        score_roc,
        sweep_roc,
        mean_runtime_s,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    image: &'a str,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    se: Option<f64>,
    pred: Option<f64>,
    sp: Option<f64>,
    ac: Option<f64>,
    score_auc: Option<f64>,
    regions: usize,
    grade: Option<&'static str>,
    runtime_s: Option<f64>,
}

impl EvalReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// One row per image; undefined rates are left empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for r in &self.images {
            w.serialize(CsvRow {
                image: &r.image,
                tp: r.counts.tp,
                fp: r.counts.fp,
                fn_: r.counts.fn_,
                tn: r.counts.tn,
                se: r.rates.se,
                pred: r.rates.pred,
                sp: r.rates.sp,
                ac: r.rates.ac,
                score_auc: r.score_auc,
                regions: r.regions,
                grade: r.grade.map(Grade::name),
                runtime_s: r.runtime_s,
            })
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `count` phantoms (seeds `spec.seed + i`) with their masks and a manifest.
pub fn write_phantom_set(spec: &PhantomSpec, count: usize, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let p = generate_phantom(&PhantomSpec {
            seed: spec.seed.wrapping_add(i as u64),
            ..spec.clone()
        })?;
        let stem = format!("phantom_{i:03}");
        let file = |suffix: &str| PathBuf::from(format!("{stem}{suffix}.png"));
        save_image(&p.image, dir.join(file("")))?;
        save_mask(&p.exudate, dir.join(file("_exudate")))?;
        save_mask(&p.hard, dir.join(file("_hard")))?;
        save_mask(&p.soft, dir.join(file("_soft")))?;
        save_mask(&p.flare, dir.join(file("_flare")))?;
        entries.push(ManifestEntry {
            image: file(""),
            exudate_mask: file("_exudate"),
            hard_mask: Some(file("_hard")),
            soft_mask: Some(file("_soft")),
            fovea: Some(p.landmarks.fovea),
            optic_disc: Some(p.landmarks.optic_disc),
        });
    }
    let manifest = Manifest {
        root: dir.to_path_buf(),
        entries,
    };
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}
