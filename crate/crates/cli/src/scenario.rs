//! Scenario files (TOML) and the inputs they reference.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use nfde::sampling::{sample_shells, Sample, SamplerConfig, DEFAULT_NODES};
use nfde::NfdeSystem;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub command: String,
    pub system: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tol: toml::Table,
    #[serde(default)]
    pub sampling: SamplingBlock,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, rename = "check-dop")]
    pub check_dop: Option<CheckDopBlock>,
    #[serde(default)]
    pub dplus: Option<DplusBlock>,
    #[serde(default)]
    pub verify: Option<VerifyBlock>,
    #[serde(default)]
    pub fit: Option<FitBlock>,
    #[serde(default)]
    pub ges: Option<GesBlock>,
    #[serde(default)]
    pub attraction: Option<AttractionBlock>,
    #[serde(default)]
    pub converse: Option<ConverseBlock>,
    #[serde(default)]
    pub iss: Option<IssBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingBlock {
    #[serde(default = "default_shells")]
    pub shells: Vec<f64>,
    #[serde(default = "default_per_shell")]
    pub per_shell: usize,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_roughness")]
    pub roughness: u32,
}

impl Default for SamplingBlock {
    fn default() -> Self {
        Self {
            shells: default_shells(),
            per_shell: default_per_shell(),
            nodes: default_nodes(),
            roughness: default_roughness(),
        }
    }
}

fn default_shells() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}

fn default_per_shell() -> usize {
    100
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

fn default_roughness() -> u32 {
    3
}

fn default_step() -> f64 {
    1e-2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub history: PathBuf,
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckDopBlock {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

impl Default for CheckDopBlock {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
        }
    }
}

fn default_resolution() -> usize {
    256
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DplusBlock {
    pub functional: PathBuf,
    pub history: PathBuf,
    #[serde(default)]
    pub input: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub functional: PathBuf,
    pub constants: PathBuf,
    #[serde(default)]
    pub seminorm: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    pub functional: PathBuf,
    /// `gas`, `ges` or `ges-seminorm`.
    pub variant: String,
    #[serde(default)]
    pub seminorm: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GesBlock {
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractionBlock {
    pub bound: f64,
    pub eps: f64,
    pub t_max: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverseBlock {
    /// Decay rate `a`; defaults to half the estimated rate.
    #[serde(default)]
    pub rate: Option<f64>,
    /// Witness horizon; defaults to the margin rule.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Fit constants for the witness and verify them on fresh samples.
    #[serde(default)]
    pub verify: bool,
    #[serde(default = "default_fresh")]
    pub fresh_samples: usize,
}

fn default_fresh() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssBlock {
    pub horizon: f64,
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_pairs")]
    pub lipschitz_pairs: usize,
}

fn default_pairs() -> usize {
    200
}

/// Loaded scenario with its base directory and a running hash of every
/// byte read on its behalf.
pub struct Context {
    pub scenario: Scenario,
    pub base: PathBuf,
    hasher: Sha256,
}

impl Context {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
        let scenario: Scenario =
            toml::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { scenario, base, hasher })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Reads a referenced file and folds it into the scenario hash.
    pub fn read(&mut self, p: &Path) -> Result<String> {
        let full = self.resolve(p);
        let text = fs::read_to_string(&full).with_context(|| format!("reading {}", full.display()))?;
        self.hasher.update((text.len() as u64).to_le_bytes());
        self.hasher.update(text.as_bytes());
        Ok(text)
    }

    /// Reads and parses a referenced JSON file, naming the file on error.
    pub fn parse<T>(&mut self, p: &Path, f: impl FnOnce(&str) -> nfde::Result<T>) -> Result<T> {
        let text = self.read(p)?;
        f(&text).with_context(|| format!("in {}", self.resolve(p).display()))
    }

    pub fn system(&mut self) -> Result<NfdeSystem> {
        let p = self.scenario.system.clone();
        self.parse(&p, nfde::schema::system_from_json)
    }

    pub fn hash_hex(&self) -> String {
        self.hasher.clone().finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn samples(&self, system: &NfdeSystem, seed: u64) -> Result<Vec<Sample>> {
        let s = &self.scenario.sampling;
        if s.shells.is_empty() || s.per_shell == 0 {
            bail!("sampling: at least one shell and one sample per shell required");
        }
        let cfg = SamplerConfig {
            nodes: s.nodes,
            roughness: s.roughness,
        };
        Ok(sample_shells(system.dim(), system.delta(), &s.shells, s.per_shell, &cfg, seed)?)
    }
}

/// Returns the block for `command` or a diagnostic naming the missing table.
pub fn block<'a, T>(b: &'a Option<T>, name: &str) -> Result<&'a T> {
    b.as_ref()
        .with_context(|| format!("scenario is missing the [{name}] table"))
}
