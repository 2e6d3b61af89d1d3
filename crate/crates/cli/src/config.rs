//! Run configuration: one TOML file with a section per command.

use std::path::Path;

use geocalib::eval::DEFAULT_VL_THRESHOLDS;
use geocalib::pipeline::RefineConfig;
use geocalib::{Error, Result};
use geocalib_sim::SimConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// `(meters, degrees)` pairs for the localization accuracy.
    pub vl_thresholds: Vec<(f64, f64)>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            vl_thresholds: DEFAULT_VL_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub simulate: SimConfig,
    pub refine: RefineConfig,
    pub evaluate: EvaluateConfig,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        // toml's messages already point at the offending line and column.
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.simulate.validate()?;
        self.refine.validate()?;
        for (m, d) in &self.evaluate.vl_thresholds {
            if !(*m > 0.0 && *d > 0.0) {
                return Err(Error::Config(format!("vl threshold ({m}, {d}) must be positive")));
            }
        }
        Ok(())
    }
}
