use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aperture::ApertureParams;
use crate::binarize::SauvolaParams;
use crate::diffusion::DiffusionParams;
use crate::error::{Error, Result};
use crate::evalharness::EvalParams;
use crate::morphology::MorphologyParams;
use crate::refine::RefineParams;
use crate::regions::RegionParams;
use crate::scalespace::ScaleSpaceParams;
use crate::severity::SeverityParams;

/// Every tunable of the pipeline, grouped by stage. Missing sections and keys
/// take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub aperture: ApertureParams,
    pub diffusion: DiffusionParams,
    pub scalespace: ScaleSpaceParams,
    pub morphology: MorphologyParams,
    pub binarize: SauvolaParams,
    pub regions: RegionParams,
    pub refine: RefineParams,
    pub severity: SeverityParams,
    pub eval: EvalParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.aperture.validate()?;
        self.diffusion.validate()?;
        self.scalespace.validate()?;
        self.morphology.validate()?;
        self.binarize.validate()?;
        self.regions.validate()?;
        self.refine.validate()?;
        self.severity.validate()?;
        self.eval.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies a `section.key=value` override, with `value` parsed as JSON.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::arg(format!("override `{assignment}` is not of the form section.key=value")))?;
        let (section, field) = key
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::arg(format!("override key `{key}` needs a section prefix")))?;
        let value: serde_json::Value =
            serde_json::from_str(raw.trim()).or_else(|_| serde_json::from_str(&format!("\"{}\"", raw.trim())))?;
        let mut tree = serde_json::to_value(&*self)?;
        let slot = tree
            .get_mut(section)
            .and_then(|s| s.as_object_mut())
            .ok_or_else(|| Error::arg(format!("unknown config section `{section}`")))?;
        if !slot.contains_key(field) {
            return Err(Error::arg(format!("unknown config key `{section}.{field}`")));
        }
        slot.insert(field.to_string(), value);
        let next: PipelineConfig = serde_json::from_value(tree)?;
        next.validate()?;
        *self = next;
        Ok(())
    }
}
