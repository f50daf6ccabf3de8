//! Experiment configuration files (TOML).
//!
//! ```toml
//! mode = "evo-devo"
//! population_size = 12
//! generations = 100
//! runs = 5
//! seed = 1
//! output_dir = "runs/desk-{mode}"
//!
//! [mutation]
//! per_voxel_prob = 0.5
//!
//! [sim]
//! eval_duration = 4.0
//! ```
//!
//! Every key is optional. `{mode}` in `output_dir` expands to the mode name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evolution::{EvolutionParams, MutationConfig};
use crate::genome::Mode;
use crate::physics::SimConfig;
use crate::Error;

/// Environment variable naming the root that relative output paths resolve against.
pub const OUTPUT_ROOT_VAR: &str = "SOFTBOT_OUTPUT_ROOT";

/// The desk-scale preset shipped as `desk.cfg`.
pub const DESK_CFG: &str = include_str!("../../../desk.cfg");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSearchConfig {
    /// Robots per mode.
    pub n: usize,
    /// Histogram bins over the pooled fitness range.
    pub bins: usize,
    /// Threshold for "near zero" fitness.
    pub epsilon: f64,
}

impl Default for RandomSearchConfig {
    fn default() -> Self {
        RandomSearchConfig { n: 1000, bins: 50, epsilon: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub rates: Vec<f64>,
    /// Runs per (rate, mode) cell.
    pub runs: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { rates: vec![0.05, 0.1, 0.25, 0.5, 0.75, 1.0], runs: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub population_size: usize,
    pub generations: u32,
    pub runs: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub mutation: MutationConfig,
    pub sim: SimConfig,
    pub random_search: RandomSearchConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::EvoDevo,
            population_size: 30,
            generations: 2000,
            runs: 30,
            seed: 1,
            output_dir: PathBuf::from("runs/{mode}"),
            mutation: MutationConfig::default(),
            sim: SimConfig::default(),
            random_search: RandomSearchConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, Error> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The desk-scale preset: population 12, 100 generations, 5 runs, 4 s lifetimes.
    pub fn desk() -> ExperimentConfig {
        ExperimentConfig::from_toml(DESK_CFG).expect("shipped desk.cfg is valid")
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.population_size < 1 {
            return Err(Error::Config("population_size must be >= 1".into()));
        }
        if self.generations < 1 {
            return Err(Error::Config("generations must be >= 1".into()));
        }
        if self.runs < 1 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.random_search.n < 1 || self.random_search.bins < 1 {
            return Err(Error::Config("random_search.n and random_search.bins must be >= 1".into()));
        }
        if self.sweep.runs < 1 {
            return Err(Error::Config("sweep.runs must be >= 1".into()));
        }
        if let Some(r) = self.sweep.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Config(format!("sweep.rates entry {r} outside [0, 1]")));
        }
        self.mutation.validate()?;
        self.sim.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Hex digest of everything that affects results (the output location does not).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn evolution_params(&self) -> EvolutionParams {
        EvolutionParams {
            mode: self.mode,
            population_size: self.population_size,
            generations: self.generations,
            mutation: self.mutation,
        }
    }

    /// `output_dir` with `{mode}` expanded, resolved against `$SOFTBOT_OUTPUT_ROOT` when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&PathBuf::from(self.output_dir.to_string_lossy().replace("{mode}", self.mode.as_str())))
    }
}

/// Resolve a relative output path against `$SOFTBOT_OUTPUT_ROOT` if it is set.
pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset() {
        let d = ExperimentConfig::desk();
        assert_eq!(d.population_size, 12);
        assert_eq!(d.generations, 100);
        assert_eq!(d.runs, 5);
        assert_eq!(d.sim.eval_duration, 4.0);
        assert_eq!(d.mutation.per_voxel_prob, 0.5);
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn field_level_errors() {
        let e = ExperimentConfig::from_toml("population_size = 0").unwrap_err();
        assert!(e.to_string().contains("population_size"));
        let e = ExperimentConfig::from_toml("[sim]\nactuation_amplitude = 0.5").unwrap_err();
        assert!(e.to_string().contains("actuation_amplitude"));
        let e = ExperimentConfig::from_toml("[mutation]\nsigmaa = 1.0").unwrap_err();
        assert!(e.to_string().contains("sigmaa"));
        assert!(ExperimentConfig::from_toml("mode = \"devo\"").is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { output_dir: "elsewhere".into(), ..a.clone() };
        let c = ExperimentConfig { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn mode_placeholder() {
        let cfg = ExperimentConfig { output_dir: "/tmp/x-{mode}".into(), mode: Mode::Evo, ..Default::default() };
        assert_eq!(cfg.resolved_output_dir(), PathBuf::from("/tmp/x-evo"));
    }
}
