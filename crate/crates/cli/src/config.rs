//! Experiment config files: one TOML table per experiment name.
//!
//! ```toml
//! [diffusion2d]
//! scale = "desk"
//! betas = [64, 32]
//!
//! [poisson2d]
//! steps = 8000
//! lipschitz = 0.9996
//! ```

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;
use zfpiter::experiments::{ConfigOverrides, Family};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    diffusion2d: Option<ConfigOverrides>,
    diffusion3d: Option<ConfigOverrides>,
    advect1d: Option<ConfigOverrides>,
    advect2d: Option<ConfigOverrides>,
    poisson2d: Option<ConfigOverrides>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn section(&self, family: Family) -> ConfigOverrides {
        let s = match family {
            Family::Diffusion2d => &self.diffusion2d,
            Family::Diffusion3d => &self.diffusion3d,
            Family::Advect1d => &self.advect1d,
            Family::Advect2d => &self.advect2d,
            Family::Poisson2d => &self.poisson2d,
        };
        s.clone().unwrap_or_default()
    }
}
