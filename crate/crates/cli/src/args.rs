use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use retina_kit::severity::Point;

#[derive(Debug, Parser)]
#[command(
    name = "retina-kit",
    version,
    about = "Exudate detection and severity grading for fundus photographs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON pipeline configuration; missing keys take their defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one key, e.g. `--set binarize.c=0.3`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect exudate candidates and write their mask.
    Detect(DetectArgs),
    /// Detect and classify candidates as hard, soft or outlier.
    Classify(ClassifyArgs),
    /// Train the region classifier from an annotated manifest.
    Train(TrainArgs),
    /// Grade severity from lesion positions around the fovea and optic disc.
    Grade(GradeArgs),
    /// Score detections against the annotations of a manifest.
    Eval(EvalArgs),
    /// Generate synthetic photographs with exact lesion masks.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Input photograph (PNG or PPM).
    #[arg(required_unless_present = "resume")]
    pub image: Option<PathBuf>,

    #[command(flatten)]
    pub config: ConfigArgs,

    /// Candidate mask, written at the working resolution.
    #[arg(long, value_name = "FILE", default_value = "mask.png")]
    pub out_mask: PathBuf,

    /// Working image with candidates drawn over it.
    #[arg(long, value_name = "FILE")]
    pub out_overlay: Option<PathBuf>,

    /// Write the decision map, binarized map and resumable stage outputs here.
    #[arg(long, value_name = "DIR")]
    pub dump_intermediates: Option<PathBuf>,

    /// Continue from a directory written by `--dump-intermediates`.
    #[arg(long, value_name = "DIR", conflicts_with = "image")]
    pub resume: Option<PathBuf>,

    /// Reuse stage outputs stored under a hash of the input and configuration.
    #[arg(long, value_name = "DIR", conflicts_with = "resume")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Classifier model; the bundled phantom-trained model when omitted.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    pub image: PathBuf,

    #[command(flatten)]
    pub model: ModelArg,

    #[command(flatten)]
    pub config: ConfigArgs,

    /// Region report; printed to stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest listing images and their hard/soft masks.
    pub manifest: PathBuf,

    #[command(flatten)]
    pub config: ConfigArgs,

    #[arg(long, value_name = "FILE", default_value = "model.json")]
    pub out_model: PathBuf,

    /// Cross-validation report; next to the model when omitted.
    #[arg(long, value_name = "FILE")]
    pub out_report: Option<PathBuf>,

    /// Seed of the fold assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 10)]
    pub folds: usize,

    /// Skip the grid search and train with the default hyperparameters.
    #[arg(long)]
    pub no_search: bool,

    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    pub image: PathBuf,

    #[command(flatten)]
    pub model: ModelArg,

    #[command(flatten)]
    pub config: ConfigArgs,

    /// Fovea center in input pixels.
    #[arg(long, value_name = "X,Y", value_parser = parse_point)]
    pub fovea: Point,

    /// Optic disc center in input pixels.
    #[arg(long, value_name = "X,Y", value_parser = parse_point)]
    pub od: Point,

    /// Grade every candidate instead of the classified hard and soft regions.
    #[arg(long, conflicts_with = "model")]
    pub unclassified: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub manifest: PathBuf,

    #[command(flatten)]
    pub config: ConfigArgs,

    /// Also score a sweep of the Sauvola sensitivity.
    #[arg(long)]
    pub sweep: bool,

    /// JSON report; a CSV with the same stem is written beside it.
    #[arg(long, value_name = "FILE", default_value = "eval_report.json")]
    pub out_report: PathBuf,

    /// Score classified hard and soft regions with this model instead of all candidates.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Write one overlay per image here.
    #[arg(long, value_name = "DIR")]
    pub overlays: Option<PathBuf>,

    /// Record per-image runtimes in the report.
    #[arg(long)]
    pub timing: bool,

    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct JobsArg {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// JSON phantom specification; missing keys take their defaults.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,

    #[arg(long, default_value_t = 1)]
    pub count: usize,

    /// Seed of the first phantom; image `i` uses `seed + i`.
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("`{s}` is not of the form x,y"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok(Point(num(x)?, num(y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn points_parse() {
        assert_eq!(parse_point("12.5, 40").unwrap(), Point(12.5, 40.0));
        assert!(parse_point("12").is_err());
        assert!(parse_point("a,1").is_err());
    }

    #[test]
    fn detect_needs_image_or_resume() {
        assert!(Cli::try_parse_from(["retina-kit", "detect"]).is_err());
        assert!(Cli::try_parse_from(["retina-kit", "detect", "--resume", "d"]).is_ok());
        assert!(Cli::try_parse_from(["retina-kit", "detect", "a.png", "--resume", "d"]).is_err());
    }
}
