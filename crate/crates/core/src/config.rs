//! Run configuration: one TOML file covering every module's tunables.
//! Command-line flags override individual fields after loading.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::EvalConfig;
use crate::preprocess::PreprocessConfig;
use crate::ratings::TestVariant;
use crate::synth::{EffectSpec, SynthLayout};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingsConfig {
    pub test: TestVariant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub subjects: usize,
    pub layout: SynthLayout,
    pub effect: EffectSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 5,
            layout: SynthLayout::default(),
            effect: EffectSpec::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::invalid("synth.subjects must be at least 1"));
        }
        self.layout.validate()?;
        self.effect.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub preprocess: PreprocessConfig,
    pub evaluate: EvalConfig,
    pub ratings: RatingsConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading config {}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.evaluate.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{EvalModality, Scenario, Task};

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        cfg.validate().unwrap();
        cfg.synth.validate().unwrap();
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = RunConfig::from_toml(
            "jobs = 2\n[evaluate]\ntask = \"q3_high_low\"\nscenario = \"indep\"\nmodality = \"fusion\"\nreps = 3\n\
             [evaluate.train]\nhidden_grid = [2, 4]\n",
        )
        .unwrap();
        assert_eq!(cfg.jobs, 2);
        assert_eq!(cfg.evaluate.task, Task::Q3HighLow);
        assert_eq!(cfg.evaluate.scenario, Scenario::Indep);
        assert_eq!(cfg.evaluate.modality, EvalModality::Fusion);
        assert_eq!(cfg.evaluate.train.hidden_grid, vec![2, 4]);
        assert_eq!(cfg.evaluate.train.max_epochs, 200);
        assert_eq!(cfg.evaluate.k_grid_eeg, vec![5, 10, 20, 40]);
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(RunConfig::from_toml("jobz = 1").is_err());
        let cfg = RunConfig::from_toml("[evaluate]\nreps = 0").unwrap();
        assert!(cfg.validate().is_err());
        assert!(RunConfig::from_toml("[evaluate]\nweight_grid = [1.5]").unwrap().validate().is_err());
    }
}
