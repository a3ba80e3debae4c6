//! Experiment configuration.
//!
//! A config file is TOML with one table per section, e.g.
//!
//! ```toml
//! [lattice]
//! kind = "square"
//! side = 64
//!
//! [chain]
//! alpha = 0.5
//! seed = 7
//! thermalization_sweeps = 2000
//! ```
//!
//! Every key has a default, unknown keys are rejected, and command-line
//! flags override values from the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srp_core::mcmc::{
    DEFAULT_REVERSAL_COUNT, DEFAULT_REVERSAL_PERIOD_SWEEPS, DEFAULT_SWEEPS_BETWEEN_SAMPLES,
    DEFAULT_THERMALIZATION_SWEEPS,
};
use srp_core::{Axis, ChainConfig, InitialCondition, JumpEnergy, LatticeKind, LatticeSpec, ZeroJump};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeChoice {
    Square,
    Triangular,
}

impl From<LatticeChoice> for LatticeKind {
    fn from(c: LatticeChoice) -> Self {
        match c {
            LatticeChoice::Square => LatticeKind::Square,
            LatticeChoice::Triangular => LatticeKind::Triangular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyChoice {
    Quadratic,
    NearestNeighbor,
    NearestNeighborFreeZero,
}

impl From<EnergyChoice> for JumpEnergy {
    fn from(c: EnergyChoice) -> Self {
        match c {
            EnergyChoice::Quadratic => JumpEnergy::Quadratic,
            EnergyChoice::NearestNeighbor => JumpEnergy::NearestNeighborOnly(ZeroJump::Forbidden),
            EnergyChoice::NearestNeighborFreeZero => JumpEnergy::NearestNeighborOnly(ZeroJump::Free),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialChoice {
    Identity,
    WindingX,
    WindingY,
}

impl From<InitialChoice> for InitialCondition {
    fn from(c: InitialChoice) -> Self {
        match c {
            InitialChoice::Identity => InitialCondition::Identity,
            InitialChoice::WindingX => InitialCondition::ForcedWinding(Axis::X),
            InitialChoice::WindingY => InitialCondition::ForcedWinding(Axis::Y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub kind: LatticeChoice,
    pub side: usize,
    /// Rectangular torus `[L0, L1]`; overrides `side`.
    pub extents: Option<[usize; 2]>,
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection { kind: LatticeChoice::Square, side: 64, extents: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub alpha: f64,
    /// One chain per value; overrides `alpha`.
    pub alphas: Option<Vec<f64>>,
    pub seed: u64,
    pub energy: EnergyChoice,
    pub initial: InitialChoice,
    pub thermalization_sweeps: u64,
    pub sweeps_between_samples: u64,
    pub reversal_period_sweeps: u64,
    pub reversal_count: usize,
    pub samples: usize,
    /// Total sweeps for `simulate`; defaults to the end of the sample schedule.
    pub sweeps: Option<u64>,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            alpha: 0.5,
            alphas: None,
            seed: 0,
            energy: EnergyChoice::Quadratic,
            initial: InitialChoice::Identity,
            thermalization_sweeps: DEFAULT_THERMALIZATION_SWEEPS,
            sweeps_between_samples: DEFAULT_SWEEPS_BETWEEN_SAMPLES,
            reversal_period_sweeps: DEFAULT_REVERSAL_PERIOD_SWEEPS,
            reversal_count: DEFAULT_REVERSAL_COUNT,
            samples: 100,
            sweeps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuGrid {
    /// `K = N^gamma` for `gamma = k/100`.
    Gamma,
    /// `K = 0, 1, ..., k_max`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NuSection {
    pub grid: NuGrid,
    pub k_max: Option<usize>,
    /// Read `(K, nu[, stderr])` from this CSV instead of sampling.
    pub inject: Option<PathBuf>,
}

impl Default for NuSection {
    fn default() -> Self {
        NuSection { grid: NuGrid::Gamma, k_max: None, inject: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calibration {
    Grid,
    Line,
    Sierpinski,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxdimSection {
    pub alphas: Vec<f64>,
    pub samples: usize,
    pub min_box_side: f64,
    /// Measure a known point set instead of running chains.
    pub calibration: Option<Calibration>,
}

impl Default for BoxdimSection {
    fn default() -> Self {
        BoxdimSection {
            alphas: vec![0.5],
            samples: 20,
            min_box_side: srp_core::fractal::DEFAULT_MIN_BOX_SIDE,
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FitChoice {
    Loglog,
    ExpRate,
    KtPower,
    KtRate,
    Crossing,
    DimensionLaws,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub model: Option<FitChoice>,
    pub input: Option<PathBuf>,
    /// Names of the abscissa and value columns; the first two by default.
    pub columns: Option<[String; 2]>,
    /// Keep only rows whose `alpha` column equals this value.
    pub alpha: Option<f64>,
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
    pub band: [f64; 2],
    pub level: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            model: None,
            input: None,
            columns: None,
            alpha: None,
            k_min: None,
            k_max: None,
            band: [srp_core::fits::DEFAULT_RATE_BAND.0, srp_core::fits::DEFAULT_RATE_BAND.1],
            level: srp_core::fits::UNIVERSAL_EXPONENT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub out: PathBuf,
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { out: PathBuf::from("out"), workers: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub lattice: LatticeSection,
    pub chain: ChainSection,
    pub nu: NuSection,
    pub boxdim: BoxdimSection,
    pub fit: FitSection,
    pub run: RunSection,
}

/// Values given on the command line, applied over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub lattice: Option<LatticeChoice>,
    pub side: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn line_of(text: &str, offset: usize) -> u64 {
    text[..offset.min(text.len())].matches('\n').count() as u64 + 1
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text, path)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.chain.seed = seed;
        }
        if let Some(alpha) = o.alpha {
            self.chain.alpha = alpha;
            self.chain.alphas = None;
            self.boxdim.alphas = vec![alpha];
        }
        if let Some(kind) = o.lattice {
            self.lattice.kind = kind;
        }
        if let Some(side) = o.side {
            self.lattice.side = side;
            self.lattice.extents = None;
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
        if let Some(workers) = o.workers {
            self.run.workers = workers;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.run.workers == 0 {
            return bad("run.workers must be at least 1".into());
        }
        if self.chain.samples == 0 {
            return bad("chain.samples must be at least 1".into());
        }
        if self.chain.sweeps_between_samples == 0 {
            return bad("chain.sweeps_between_samples must be at least 1".into());
        }
        for a in self.alphas().iter().chain(&self.boxdim.alphas) {
            if !(*a >= 0.0 && a.is_finite()) {
                return bad(format!("alpha must be finite and >= 0, got {a}"));
            }
        }
        if self.chain.alphas.as_ref().is_some_and(|a| a.is_empty()) {
            return bad("chain.alphas must not be empty".into());
        }
        if !(self.boxdim.min_box_side > 0.0) {
            return bad("boxdim.min_box_side must be positive".into());
        }
        if !(self.fit.band[0] < self.fit.band[1]) {
            return bad("fit.band must be an increasing pair".into());
        }
        self.lattice_spec()?;
        Ok(())
    }

    pub fn lattice_spec(&self) -> Result<LatticeSpec> {
        let [l0, l1] = self.lattice.extents.unwrap_or([self.lattice.side; 2]);
        Ok(LatticeSpec::rectangular(self.lattice.kind.into(), l0, l1)?)
    }

    /// The `alpha` of every chain cell.
    pub fn alphas(&self) -> Vec<f64> {
        self.chain.alphas.clone().unwrap_or_else(|| vec![self.chain.alpha])
    }

    /// Chain parameters for cell `index` at `alpha`; the cell index selects
    /// the random stream.
    pub fn chain_config(&self, alpha: f64, index: usize) -> ChainConfig {
        ChainConfig {
            alpha,
            energy: self.chain.energy.into(),
            seed: self.chain.seed,
            stream: index as u64,
            thermalization_sweeps: self.chain.thermalization_sweeps,
            sweeps_between_samples: self.chain.sweeps_between_samples,
            reversal_period_sweeps: self.chain.reversal_period_sweeps,
            reversal_count: self.chain.reversal_count,
            initial: self.chain.initial.into(),
        }
    }

    /// Canonical TOML rendering of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_toml`], ignoring the
    /// `[run]` section since it does not change any result.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig { run: RunSection::default(), ..self.clone() };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
