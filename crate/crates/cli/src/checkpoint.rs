//! Versioned JSON checkpoints of a running chain.
//!
//! Reals are stored as the hexadecimal bit pattern of the `f64` so that a
//! resumed chain continues bit for bit. The generator is stored as its key
//! (seed and stream) and its position in 32-bit words. The layout is
//! described in `docs/checkpoint.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use srp_core::{Chain, ChainConfig, LatticeSpec, PermutationState, RngStream};

use crate::config::{EnergyChoice, InitialChoice, LatticeChoice};
use crate::error::{CliError, Result};

pub const FORMAT: &str = "srp-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngRecord {
    pub algorithm: String,
    pub seed: u64,
    pub stream: u64,
    /// Decimal `u128`.
    pub word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub lattice: LatticeChoice,
    pub extents: [usize; 2],
    pub energy: EnergyChoice,
    pub initial: InitialChoice,
    /// `f64` bits as 16 hex digits.
    pub alpha_bits: String,
    pub thermalization_sweeps: u64,
    pub sweeps_between_samples: u64,
    pub reversal_period_sweeps: u64,
    pub reversal_count: usize,
    pub rng: RngRecord,
    pub sweeps: u64,
    pub energy_bits: String,
    pub swaps_since_sync: u64,
    pub targets: Vec<u32>,
}

fn bits(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn unbits(s: &str) -> Option<f64> {
    u64::from_str_radix(s, 16).ok().map(f64::from_bits)
}

fn energy_choice(chain: &Chain) -> Result<EnergyChoice> {
    let name = chain.config().energy.name();
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| CliError::Config(format!("jump energy '{name}' cannot be checkpointed")))
}

fn initial_choice(c: &ChainConfig) -> InitialChoice {
    use srp_core::{Axis, InitialCondition};
    match c.initial {
        InitialCondition::Identity => InitialChoice::Identity,
        InitialCondition::ForcedWinding(Axis::X) => InitialChoice::WindingX,
        InitialCondition::ForcedWinding(Axis::Y) => InitialChoice::WindingY,
    }
}

impl Checkpoint {
    pub fn capture(chain: &Chain) -> Result<Self> {
        let state = chain.state();
        let config = chain.config();
        let lattice = match state.lattice().kind() {
            srp_core::LatticeKind::Square => LatticeChoice::Square,
            srp_core::LatticeKind::Triangular => LatticeChoice::Triangular,
        };
        Ok(Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            lattice,
            extents: state.lattice().extents(),
            energy: energy_choice(chain)?,
            initial: initial_choice(config),
            alpha_bits: bits(config.alpha),
            thermalization_sweeps: config.thermalization_sweeps,
            sweeps_between_samples: config.sweeps_between_samples,
            reversal_period_sweeps: config.reversal_period_sweeps,
            reversal_count: config.reversal_count,
            rng: RngRecord {
                algorithm: RngStream::ALGORITHM.into(),
                seed: config.seed,
                stream: config.stream,
                word_pos: chain.rng().get_word_pos().to_string(),
            },
            sweeps: chain.sweeps(),
            energy_bits: bits(state.energy()),
            swaps_since_sync: state.swaps_since_sync(),
            targets: state.targets().to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let fail = |message: String| CliError::Checkpoint { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        if cp.format != FORMAT {
            return Err(fail(format!("not a checkpoint (format '{}')", cp.format)));
        }
        if cp.version != VERSION {
            return Err(fail(format!("unsupported version {} (expected {VERSION})", cp.version)));
        }
        if cp.rng.algorithm != RngStream::ALGORITHM {
            return Err(fail(format!("unsupported generator '{}'", cp.rng.algorithm)));
        }
        Ok(cp)
    }

    pub fn chain_config(&self) -> Result<ChainConfig> {
        let alpha = unbits(&self.alpha_bits).ok_or_else(|| CliError::Config("bad alpha bits".into()))?;
        Ok(ChainConfig {
            alpha,
            energy: self.energy.into(),
            seed: self.rng.seed,
            stream: self.rng.stream,
            thermalization_sweeps: self.thermalization_sweeps,
            sweeps_between_samples: self.sweeps_between_samples,
            reversal_period_sweeps: self.reversal_period_sweeps,
            reversal_count: self.reversal_count,
            initial: self.initial.into(),
        })
    }

    /// The chain exactly as it was captured.
    pub fn restore(&self) -> Result<Chain> {
        let config = self.chain_config()?;
        let lattice = LatticeSpec::rectangular(self.lattice.into(), self.extents[0], self.extents[1])?;
        let energy = unbits(&self.energy_bits).ok_or_else(|| CliError::Config("bad energy bits".into()))?;
        let state = PermutationState::from_parts(
            lattice,
            config.energy.clone(),
            self.targets.clone(),
            energy,
            self.swaps_since_sync,
        )?;
        let word_pos: u128 = self
            .rng
            .word_pos
            .parse()
            .map_err(|_| CliError::Config(format!("bad generator position '{}'", self.rng.word_pos)))?;
        let rng = config.rng_stream().rng_at(word_pos);
        Ok(Chain::resume(config, state, rng, self.sweeps)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Chain {
        let mut config = ChainConfig::new(0.7);
        config.seed = 5;
        config.stream = 2;
        let mut chain = Chain::new(LatticeSpec::square(8).unwrap(), config).unwrap();
        for _ in 0..13 {
            chain.sweep();
        }
        chain
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        let mut a = chain();
        let cp = Checkpoint::capture(&a).unwrap();
        cp.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, cp);
        let mut b = loaded.restore().unwrap();
        assert_eq!(b.state().targets(), a.state().targets());
        assert_eq!(b.sweeps(), 13);
        for _ in 0..7 {
            a.sweep();
            b.sweep();
        }
        assert_eq!(a.state().targets(), b.state().targets());
        assert_eq!(a.state().energy().to_bits(), b.state().energy().to_bits());
    }

    #[test]
    fn rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        let mut cp = Checkpoint::capture(&chain()).unwrap();
        cp.version = 99;
        std::fs::write(&path, serde_json::to_string(&cp).unwrap()).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(CliError::Checkpoint { .. })));
        std::fs::write(&path, "{").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
