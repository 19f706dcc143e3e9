//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeBasis, NestedChain};
use crate::rates::{CalibrationOptions, SecondMoment};
use crate::source::{SourceConfig, SourceParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Flatness,
    Extract,
    Keygen,
    Rates,
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

/// A lattice by family (`Zn`, `Dn`, `E8`) and dimension, or by explicit basis rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub family: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "one")]
    pub scale: f64,
    /// Basis vectors as rows, for `family = "custom"`.
    #[serde(default)]
    pub basis: Option<Vec<Vec<f64>>>,
}

fn one() -> f64 {
    1.0
}

impl LatticeSpec {
    pub fn build(&self) -> Result<LatticeBasis> {
        let base = match (self.family.as_str(), &self.basis) {
            ("custom", Some(rows)) => LatticeBasis::custom(rows)?,
            ("custom", None) => return Err(Error::Config("custom lattice needs a basis".into())),
            (_, Some(_)) => {
                return Err(Error::Config(
                    "basis is only allowed with family \"custom\"".into(),
                ))
            }
            ("E8", None) => {
                if self.n.is_some_and(|n| n != 8) {
                    return Err(Error::Config("E8 has dimension 8".into()));
                }
                LatticeBasis::e8()?
            }
            (family, None) => {
                let n = self
                    .n
                    .ok_or_else(|| Error::Config(format!("lattice family {family} needs n")))?;
                LatticeBasis::family_member(family, n)?
            }
        };
        base.scaled(self.scale)
    }
}

/// `Λ₁ = base_scale · lattice`, `Λ₂ = scale2 Λ₁`, `Λ₃ = scale3 Λ₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub family: String,
    #[serde(default)]
    pub n: Option<usize>,
    pub base_scale: f64,
    pub scale2: u32,
    pub scale3: u32,
    #[serde(default)]
    pub basis: Option<Vec<Vec<f64>>>,
}

impl ChainSpec {
    /// Parses `FAMILY[:N]:BASE_SCALE:SCALE2:SCALE3`, e.g. `Zn:4:0.5:4:2` or `E8:0.5:2:2`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || {
            Error::Config(format!(
                "cannot parse chain {text:?}; expected FAMILY[:N]:BASE_SCALE:SCALE2:SCALE3"
            ))
        };
        if parts.len() < 4 || parts.len() > 5 {
            return Err(bad());
        }
        let k = parts.len();
        let n = if k == 5 {
            Some(parts[1].parse().map_err(|_| bad())?)
        } else {
            None
        };
        Ok(ChainSpec {
            family: parts[0].to_string(),
            n,
            base_scale: parts[k - 3].parse().map_err(|_| bad())?,
            scale2: parts[k - 2].parse().map_err(|_| bad())?,
            scale3: parts[k - 1].parse().map_err(|_| bad())?,
            basis: None,
        })
    }

    pub fn build(&self) -> Result<NestedChain> {
        let base = LatticeSpec {
            family: self.family.clone(),
            n: self.n,
            scale: self.base_scale,
            basis: self.basis.clone(),
        }
        .build()?;
        NestedChain::new(base, self.scale2, self.scale3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub family: String,
    pub n_list: Vec<usize>,
    pub vnr: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlatnessSettings {
    pub sigmas: Vec<f64>,
    /// Grid points per dimension for the direct oracle (n ≤ 2 only).
    pub grid: usize,
    pub sweep: Option<SweepSettings>,
}

impl Default for FlatnessSettings {
    fn default() -> Self {
        Self {
            sigmas: vec![0.25, 0.5, 1.0],
            grid: 64,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSettings {
    pub mi_samples: u64,
    pub tv_samples: u64,
    pub tv_bins: usize,
    /// Extra `ρ_xz` values, each giving one row of the σ₂ sweep.
    pub sweep_rho_xz: Vec<f64>,
}

impl Default for ExtractSettings {
    fn default() -> Self {
        Self {
            mi_samples: 100_000,
            tv_samples: 1_000_000,
            tv_bins: 16,
            sweep_rho_xz: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeygenSettings {
    pub z_bins: usize,
    pub d_av_replicates: usize,
}

impl Default for KeygenSettings {
    fn default() -> Self {
        Self {
            z_bins: 8,
            d_av_replicates: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesSettings {
    /// `G(Λ₁)`; defaults to `1/(2πe)`.
    pub g: Option<f64>,
    /// Sweep range of `V₁^{2/n}`; defaults to `[1e-8 σ₁², 10 σ₁²]`.
    pub v1_min: Option<f64>,
    pub v1_max: Option<f64>,
    pub points: Option<usize>,
    /// Report rates in bits instead of nats.
    pub bits: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSettings {
    pub family: String,
    pub n: usize,
    #[serde(default = "default_target")]
    pub target_epsilon: f64,
    #[serde(default)]
    pub second_moment: SecondMoment,
    #[serde(default = "default_cap")]
    pub max_key_cardinality: u64,
    #[serde(default = "default_cap")]
    pub max_public_cardinality: u64,
}

fn default_target() -> f64 {
    0.1
}

fn default_cap() -> u64 {
    1 << 16
}

impl CalibrateSettings {
    pub fn options(&self) -> CalibrationOptions {
        CalibrationOptions {
            target_epsilon: self.target_epsilon,
            second_moment: self.second_moment,
            max_key_cardinality: self.max_key_cardinality,
            max_public_cardinality: self.max_public_cardinality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub command: Option<CommandKind>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub source: Option<SourceConfig>,
    #[serde(default)]
    pub lattice: Option<LatticeSpec>,
    #[serde(default)]
    pub chain: Option<ChainSpec>,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub flatness: FlatnessSettings,
    #[serde(default)]
    pub extract: ExtractSettings,
    #[serde(default)]
    pub keygen: KeygenSettings,
    #[serde(default)]
    pub rates: RatesSettings,
    #[serde(default)]
    pub calibrate: Option<CalibrateSettings>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

impl ExperimentConfig {
    pub fn empty() -> Self {
        serde_json::from_str(&format!("{{\"schema_version\": {SCHEMA_VERSION}}}"))
            .expect("minimal config parses")
    }

    /// Parses and checks the schema version; errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn source_params(&self) -> Result<SourceParams> {
        let cfg = self
            .source
            .as_ref()
            .ok_or_else(|| Error::Config("a source block is required".into()))?;
        SourceParams::from_config(cfg)
    }

    pub fn lattice(&self) -> Result<LatticeBasis> {
        self.lattice
            .as_ref()
            .ok_or_else(|| Error::Config("a lattice block is required".into()))?
            .build()
    }
}

/// Reads a standalone `source` block from a JSON file.
pub fn source_from_path(path: &Path) -> Result<SourceConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
