//! Exudate screening for color fundus photographs.
//!
//! Stages, in pipeline order:
//!
//! 1. [`imgio`] loads the photograph and rescales it to the 400 px working
//!    size; [`aperture`] fills the dark surround of the camera aperture.
//! 2. [`diffusion`] smooths noise while keeping lesion edges.
//! 3. [`scalespace`] builds the Gaussian scale-space decision map.
//! 4. [`morphology`] enhances the map by grayscale closing.
//! 5. [`binarize`] applies Sauvola thresholding.
//! 6. [`refine`] regrows each detection to the lesion outline and [`regions`]
//!    removes vessels, flares and other outliers.
//! 7. [`classifier`] labels the survivors hard exudate, soft exudate or outlier.
//! 8. [`severity`] grades the lesion load around the fovea and optic disc.
//!
//! [`evalharness`] scores detections at pixel level and generates synthetic
//! phantoms with exact ground truth; [`pipeline`] wires the stages together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aperture;
pub mod binarize;
pub mod classifier;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod evalharness;
pub mod imgio;
pub mod morphology;
pub mod pipeline;
pub mod refine;
pub mod regions;
pub mod scalespace;
pub mod severity;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use imgio::{BinaryMask, ColorSpace, InterestMap, RasterImage};
pub use pipeline::{Detection, Detector};
