//! Experiment configuration, read from TOML. Every key is optional.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use simplgen::miner::MinerConfig;
use simplgen::synth::SynthConfig;
use simplgen::tuner::TuneOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Pattern sizes to mine; each overrides `miner.n` in turn.
    pub pattern_sizes: Vec<usize>,
    /// Only patterns at least this significant are handed to synthesis.
    pub synth_epsilon: f64,
    pub miner: MinerConfig,
    pub synth: SynthConfig,
    pub tuner: TuneOptions,
    pub split: SplitConfig,
    pub filter: FilterConfig,
    /// Runs of an external metric command per measurement.
    pub metric_reps: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            pattern_sizes: vec![3],
            synth_epsilon: 0.02,
            miner: MinerConfig::default(),
            synth: SynthConfig::default(),
            tuner: TuneOptions::default(),
            split: SplitConfig::default(),
            filter: FilterConfig::default(),
            metric_reps: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Search, Train and Test shares.
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fractions: [0.4, 0.3, 0.3],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_terms: usize,
    pub min_cost: Option<f64>,
    pub max_cost: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        assert_eq!(
            PipelineConfig::parse("").unwrap(),
            PipelineConfig::default()
        );
        let c = PipelineConfig::parse("synth_epsilon = 0.01\n[miner]\nepsilon = 0.05\n[tuner]\nbudget = 7\n[tuner.sem]\nwidth = 6\n")
            .unwrap();
        assert_eq!(c.synth_epsilon, 0.01);
        assert_eq!(c.miner.epsilon, 0.05);
        assert_eq!(c.miner.n, 3);
        assert_eq!(c.tuner.budget, 7);
        assert_eq!(c.tuner.sem.width, 6);
        assert_eq!(c.tuner.penalty_factor, 4.0);
        assert!(PipelineConfig::parse("[miner]\nepsilon = \"x\"\n").is_err());
    }

    #[test]
    fn round_trip() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::parse(&c.to_toml()).unwrap(), c);
    }
}
