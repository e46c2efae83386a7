use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use retina_kit::classifier::{
    cross_validate, grid_search, load_model, save_model, train, CvReport, ExudateClass, Grid, Hyperparams,
    LabeledSample, SvmModel, FEATURE_NAMES,
};
use retina_kit::evalharness::{
    evaluate_dataset, load_sample, overlay, predicted_mask, write_phantom_set, EvalOptions, Manifest, PhantomSpec,
};
use retina_kit::imgio::{load_image, save_image, save_mask, BinaryMask};
use retina_kit::pipeline::{classify, training_samples};
use retina_kit::regions::BBox;
use retina_kit::severity::{grade_combined, RetinalLandmarks, SeverityGrade};
use retina_kit::{Detection, Detector, PipelineConfig};
use serde::Serialize;

use crate::args::{
    ClassifyArgs, Command, ConfigArgs, DetectArgs, EvalArgs, GradeArgs, JobsArg, ModelArg, PhantomArgs, TrainArgs,
};
use crate::error::{Classify, CliError, CliResult};
use crate::stages;

const BUNDLED_MODEL: &str = include_str!("../assets/phantom_model.json");

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Detect(a) => detect(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Grade(a) => grade_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Phantom(a) => phantom_cmd(a),
    }
}

fn load_config(args: &ConfigArgs) -> CliResult<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path).usage()?,
        None => PipelineConfig::default(),
    };
    for o in &args.overrides {
        cfg.set(o).usage()?;
    }
    Ok(cfg)
}

fn detector(args: &ConfigArgs) -> CliResult<Detector> {
    Detector::new(load_config(args)?).usage()
}

fn load_model_arg(arg: &ModelArg) -> CliResult<SvmModel> {
    match &arg.model {
        Some(path) => load_model(path).usage(),
        None => SvmModel::from_json(BUNDLED_MODEL).map_err(|e| CliError::Pipeline(format!("bundled model: {e}"))),
    }
}

fn init_jobs(arg: &JobsArg) -> CliResult<()> {
    if let Some(n) = arg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| CliError::Pipeline(e.to_string()))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Pipeline(e.to_string()))? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn detect_image(detector: &Detector, path: &Path) -> CliResult<Detection> {
    let img = load_image(path).usage()?;
    detector.detect(&img).stage()
}

#[derive(Serialize)]
struct DetectSummary {
    width: usize,
    height: usize,
    regions: usize,
    candidates: usize,
    candidate_pixels: usize,
    mask: PathBuf,
}

fn detect(a: DetectArgs) -> CliResult<()> {
    let detector = detector(&a.config)?;
    let det = match (&a.image, &a.resume, &a.cache) {
        (_, Some(dir), _) => stages::resume(&detector, dir)?,
        (Some(img), None, Some(cache)) => stages::detect_cached(&detector, img, cache)?,
        (Some(img), None, None) => detect_image(&detector, img)?,
        (None, None, _) => return Err(CliError::Usage("an input image or --resume is required".into())),
    };
    save_mask(&det.candidate_mask, &a.out_mask).stage()?;
    if let Some(path) = &a.out_overlay {
        let none = BinaryMask::new(det.width(), det.height());
        save_image(&overlay(&det.working, &det.candidate_mask, &none).stage()?, path).stage()?;
    }
    if let Some(dir) = &a.dump_intermediates {
        stages::dump(&det, dir)?;
    }
    write_json(
        &DetectSummary {
            width: det.width(),
            height: det.height(),
            regions: det.regions.len(),
            candidates: det.candidates.len(),
            candidate_pixels: det.candidate_mask.count(),
            mask: a.out_mask,
        },
        None,
    )
}

#[derive(Serialize)]
struct RegionReport {
    label: usize,
    class: ExudateClass,
    votes: [u32; 3],
    margins: [f64; 3],
    area: usize,
    centroid: (f64, f64),
    bbox: BBox,
    features: BTreeMap<&'static str, f64>,
}

#[derive(Serialize)]
struct ClassifyReport {
    image: PathBuf,
    width: usize,
    height: usize,
    regions: Vec<RegionReport>,
}

fn classify_cmd(a: ClassifyArgs) -> CliResult<()> {
    let detector = detector(&a.config)?;
    let model = load_model_arg(&a.model)?;
    let det = detect_image(&detector, &a.image)?;
    let regions = classify(&det, &model)
        .stage()?
        .into_iter()
        .map(|c| RegionReport {
            label: c.region.label,
            class: c.prediction.class,
            votes: c.prediction.votes,
            margins: c.prediction.margins,
            area: c.region.area,
            centroid: c.region.centroid,
            bbox: c.region.bbox,
            features: FEATURE_NAMES.iter().copied().zip(c.features.0).collect(),
        })
        .collect();
    let report = ClassifyReport {
        image: a.image,
        width: det.width(),
        height: det.height(),
        regions,
    };
    write_json(&report, a.out_json.as_deref())
}

#[derive(Serialize)]
struct TrainReport {
    images: usize,
    samples: usize,
    /// Samples per class, hard, soft, outlier.
    class_counts: [usize; 3],
    seed: u64,
    chosen: Hyperparams,
    cv: CvReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    grid: Vec<CvReport>,
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    init_jobs(&a.jobs)?;
    let detector = detector(&a.config)?;
    let manifest = Manifest::load(&a.manifest).usage()?;
    let per_image: Vec<CliResult<Vec<LabeledSample>>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let sample = load_sample(&manifest, entry).usage()?;
            let det = detector.detect(&sample.image).stage()?;
            training_samples(&det, &sample.truth).stage()
        })
        .collect();
    let mut samples = Vec::new();
    for s in per_image {
        samples.extend(s?);
    }
    let mut class_counts = [0; 3];
    for s in &samples {
        class_counts[s.class.index()] += 1;
    }
    log::info!(
        "{} regions from {} images, per class {class_counts:?}",
        samples.len(),
        manifest.entries.len()
    );

    let (chosen, cv, grid) = if a.no_search {
        let hp = Hyperparams::default();
        let cv = cross_validate(&samples, &hp, a.folds, a.seed).stage()?;
        (hp, cv, Vec::new())
    } else {
        let (hp, grid) = grid_search(&samples, &Grid::default(), a.folds, a.seed).stage()?;
        let cv = grid
            .iter()
            .find(|r| r.hyperparams == hp)
            .cloned()
            .ok_or_else(|| CliError::Pipeline("grid search lost its winner".into()))?;
        (hp, cv, grid)
    };
    let model = train(&samples, &chosen).stage()?;
    save_model(&model, &a.out_model).stage()?;
    let report_path = a.out_report.unwrap_or_else(|| a.out_model.with_extension("cv.json"));
    let report = TrainReport {
        images: manifest.entries.len(),
        samples: samples.len(),
        class_counts,
        seed: a.seed,
        chosen,
        cv,
        grid,
    };
    write_json(&report, Some(&report_path))?;
    println!(
        "trained on {} regions, cv accuracy {:.4}, model {}",
        report.samples,
        report.cv.accuracy.mean,
        a.out_model.display()
    );
    Ok(())
}

fn grade_cmd(a: GradeArgs) -> CliResult<()> {
    let detector = detector(&a.config)?;
    let img = load_image(&a.image).usage()?;
    let landmarks = RetinalLandmarks {
        fovea: a.fovea,
        optic_disc: a.od,
        image_width: img.width(),
        image_height: img.height(),
    };
    landmarks.validate().usage()?;
    let det = detector.detect(&img).stage()?;
    let model = if a.unclassified {
        None
    } else {
        Some(load_model_arg(&a.model)?)
    };
    let (mask, _) = predicted_mask(&det, model.as_ref()).stage()?;
    let lm = landmarks.rescaled(det.width(), det.height());
    let grade: SeverityGrade = grade_combined(&mask, &lm, &detector.config().severity).stage()?;
    write_json(&grade, None)
}

fn eval_cmd(a: EvalArgs) -> CliResult<()> {
    init_jobs(&a.jobs)?;
    let detector = detector(&a.config)?;
    let manifest = Manifest::load(&a.manifest).usage()?;
    let model = a.model.as_ref().map(load_model).transpose().usage()?;
    let opts = EvalOptions {
        sweep: a.sweep,
        overlay_dir: a.overlays,
        model,
        timing: a.timing,
    };
    let report = evaluate_dataset(&manifest, &detector, &opts).stage()?;
    report.write_json(&a.out_report).stage()?;
    report.write_csv(a.out_report.with_extension("csv")).stage()?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} images, {} failed: SE {} PRED {} SP {} AC {}",
        report.images.len(),
        report.errors.len(),
        fmt(report.rates.se),
        fmt(report.rates.pred),
        fmt(report.rates.sp),
        fmt(report.rates.ac)
    );
    if report.images.is_empty() && !report.errors.is_empty() {
        return Err(CliError::Pipeline(format!(
            "every entry failed, first: {}",
            report.errors[0].error
        )));
    }
    Ok(())
}

fn phantom_cmd(a: PhantomArgs) -> CliResult<()> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<PhantomSpec>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => PhantomSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    spec.validate().usage()?;
    let manifest = write_phantom_set(&spec, a.count, &a.out_dir).stage()?;
    println!("{} phantoms in {}", manifest.entries.len(), a.out_dir.display());
    Ok(())
}
