//! Run configuration file (TOML). Every section is optional and missing keys
//! take their defaults; unknown keys are rejected. Angles are in radians,
//! distances in metres, times in seconds, speeds in m/s unless a key name
//! says otherwise (`*_kn`, `*_deg_s`).
//!
//! ```toml
//! seed = 1
//! threads = 4
//!
//! [gate]
//! tau = 4.0
//!
//! [score.prior]
//! beta = 0.001
//!
//! [train]
//! epochs = 40
//! hidden = [64, 64, 32]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{AtdConfig, CbtrConfig, KfConfig};
use crate::classifier::TrainConfig;
use crate::dataio::{PreprocessConfig, SynthConfig};
use crate::error::{Error, Result};
use crate::evaluation::RegionModel;
use crate::gating::{GateConfig, ScoreConfig};
use crate::screening::ScreenConfig;
use crate::tracker::PipelineConfig;
use crate::workflow::BaselineConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub gate: GateConfig,
    pub score: ScoreConfig,
    pub screen: ScreenConfig,
    pub preprocess: PreprocessConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub cbtr: CbtrConfig,
    pub atd: AtdConfig,
    pub kf: KfConfig,
    pub region: RegionModel,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline().validate()?;
        self.preprocess.validate()?;
        self.synth.validate()?;
        self.train.validate()?;
        self.cbtr.validate()?;
        self.atd.validate()?;
        self.kf.validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { gate: self.gate, score: self.score, screen: self.screen }
    }

    pub fn baselines(&self) -> BaselineConfig {
        BaselineConfig { cbtr: self.cbtr, atd: self.atd, kf: self.kf }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_override_single_keys() {
        let c = RunConfig::from_toml("seed = 9\n[gate]\ntau = 3.0\n[score.prior]\nbeta = 0.01\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.gate.tau, 3.0);
        assert_eq!(c.gate.sigma0, GateConfig::default().sigma0);
        assert_eq!(c.score.prior.beta, 0.01);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[gate]\ntua = 3.0\n").is_err());
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[screen]\nk = 0\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }
}
