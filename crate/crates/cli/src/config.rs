//! Run configuration: one JSON file per run, every field optional.

use std::path::Path;

use anyhow::{Context, Result};
use blockspin_core::checks::SuiteConfig;
use blockspin_core::oracle::OracleConfig;
use blockspin_core::solver::{SolverConfig, VerifyTolerances};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Box side; odd and at least 3.
    #[serde(rename = "L")]
    pub l: usize,
    /// Lattice side is `L^(m+1)`.
    pub m: usize,
    /// Seed for the sampled coarse configuration.
    pub seed: u64,
    pub solver: SolverConfig,
    pub verify: VerifyTolerances,
    pub oracle: OracleConfig,
    /// Largest accepted `‖A_solver − A_oracle‖∞`.
    pub oracle_agreement: f64,
    pub green: GreenOptions,
    pub random_walk: RandomWalkOptions,
    pub images: ImageOptions,
    pub suite: SuiteConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            l: 3,
            m: 1,
            seed: 0,
            solver: SolverConfig::default(),
            verify: VerifyTolerances::default(),
            oracle: OracleConfig::default(),
            oracle_agreement: 1e-6,
            green: GreenOptions::default(),
            random_walk: RandomWalkOptions::default(),
            images: ImageOptions::default(),
            suite: SuiteConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenOptions {
    /// Also write row-major little-endian `f64` dumps with JSON headers.
    pub binary: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomWalkOptions {
    /// The window is `[−radius, radius + L)²`.
    pub radius: i64,
    pub half_size: i64,
    pub order: usize,
    /// Largest accepted deviation from the direct inverse.
    pub tolerance: f64,
    /// Exponent used by the localization check of the probe column.
    pub delta: f64,
    pub epsilon: f64,
    pub srl_range: i64,
}

impl Default for RandomWalkOptions {
    fn default() -> Self {
        RandomWalkOptions {
            radius: 24,
            half_size: 6,
            order: 40,
            tolerance: 1e-8,
            delta: 0.5,
            epsilon: 0.25,
            srl_range: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageOptions {
    /// Image radii as multiples of `n`, increasing.
    pub radius_multiples: Vec<i64>,
    /// Coarse free-inverse stencil radius in boxes.
    pub stencil_radius: i64,
    /// Largest accepted deviation at the largest radius.
    pub tolerance: f64,
    /// Allowed growth between consecutive radii once at roundoff.
    pub roundoff: f64,
    /// Random pairs per radius instead of all pairs.
    pub samples: Option<usize>,
}

impl Default for ImageOptions {
    fn default() -> Self {
        ImageOptions {
            radius_multiples: vec![1, 2, 4, 8],
            stencil_radius: 12,
            tolerance: 1e-6,
            roundoff: 1e-14,
            samples: None,
        }
    }
}

/// Reads a config; errors carry the JSON path of the offending field.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("invalid config at `{path}`: {}", e.into_inner())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_configs_keep_defaults() {
        let cfg = parse(r#"{"m": 2, "solver": {"eps": 0.1}}"#).unwrap();
        assert_eq!((cfg.l, cfg.m), (3, 2));
        assert_eq!(cfg.solver.eps, 0.1);
        assert_eq!(cfg.solver.max_iter, SolverConfig::default().max_iter);
        assert_eq!(cfg.images.radius_multiples, vec![1, 2, 4, 8]);
    }

    #[test]
    fn type_errors_carry_the_path() {
        let err = parse(r#"{"images": {"radius_multiples": [1, "two"]}}"#).unwrap_err();
        assert!(err.to_string().contains("images.radius_multiples[1]"), "{err}");
    }
}
