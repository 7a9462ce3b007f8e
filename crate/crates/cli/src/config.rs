//! Run configuration: a TOML document whose keys all have defaults. Command
//! line flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spd_core::debias::{SelectionMode, SfidConfig, SpdConfig};
use spd_core::inlp::{InlpConfig, DEFAULT_INLP_L2};
use spd_core::models::{ForestConfig, LogisticConfig};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Spd,
    Sfid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Threshold,
    BottomPercent,
}

impl From<Mode> for SelectionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Threshold => SelectionMode::Threshold,
            Mode::BottomPercent => SelectionMode::BottomPercent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub attribute: Option<String>,
    pub method: Method,
    /// Bias directions kept by SPD.
    pub r: usize,
    /// INLP round cap.
    pub max_iterations: usize,
    pub stop_margin: f64,
    pub inlp_l2: f64,
    pub tau: f64,
    pub mode: Mode,
    /// Coordinates replaced by SFID, and top-m size for overlap reports.
    pub m: usize,
    pub n_trees: usize,
    pub seed: Option<u64>,
    pub renormalize: bool,
    pub reinjection: bool,
    pub smoothing_alpha: f64,
    pub bootstrap: usize,
    pub probe_test_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            attribute: None,
            method: Method::Spd,
            r: 5,
            max_iterations: 20,
            stop_margin: 0.02,
            inlp_l2: DEFAULT_INLP_L2,
            tau: 0.7,
            mode: Mode::Threshold,
            m: 100,
            n_trees: 100,
            seed: None,
            renormalize: false,
            reinjection: true,
            smoothing_alpha: 1.0,
            bootstrap: 1000,
            probe_test_frac: 0.2,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("a seed is required: pass --seed or set `seed` in the config".into()))
    }

    pub fn forest(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            seed,
            ..ForestConfig::default()
        }
    }

    pub fn spd(&self, seed: u64) -> SpdConfig {
        SpdConfig {
            inlp: InlpConfig {
                max_iterations: self.max_iterations,
                target_directions: self.r,
                stop_margin: self.stop_margin,
                classifier: LogisticConfig {
                    l2_lambda: self.inlp_l2,
                    ..LogisticConfig::default()
                },
                ..InlpConfig::default()
            },
            forest: self.forest(seed),
            mode: self.mode.into(),
            tau: self.tau,
            reinjection: self.reinjection,
        }
    }

    pub fn sfid(&self, seed: u64) -> SfidConfig {
        SfidConfig {
            m: self.m,
            tau: self.tau,
            mode: self.mode.into(),
            forest: self.forest(seed),
        }
    }
}
