use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("site index {index} out of range for {sites} sites")]
    SiteOutOfRange { index: usize, sites: usize },

    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),

    #[error("stale cycle decomposition (decomposed at generation {decomposed}, state is at {current})")]
    StaleCycleId { decomposed: u64, current: u64 },

    #[error("cycle id {id} out of range ({count} cycles)")]
    UnknownCycle { id: usize, count: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("point ({x}, {y}) lies outside the domain [0, {side})^2")]
    OutOfDomain { x: f64, y: f64, side: f64 },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
