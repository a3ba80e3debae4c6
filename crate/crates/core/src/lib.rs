//! Spatial random permutations on periodic square and triangular lattices.
//!
//! The crate samples the Gibbs measure `P(pi) ~ exp(-alpha * sum_x xi(pi(x) - x))`
//! with a nearest-neighbor swap Metropolis chain, measures cycle statistics
//! (tail of the cycle-length law, winding, box-counting dimension of long
//! cycles), fits the critical forms of the algebraic-to-exponential transition,
//! and checks all of it against exact enumeration on tiny tori.

pub mod error;
pub mod fits;
pub mod fractal;
pub mod lattice;
pub mod mcmc;
pub mod observables;
pub mod oracle;
pub mod permutation;

pub use error::{Error, Result};
pub use fits::{FitModel, FitResult};
pub use fractal::{BoxCountCurve, BoxLadder, BoxWindow, DimensionEstimate};
pub use lattice::{JumpVector, LatticeKind, LatticeSpec, SiteIndex};
pub use mcmc::{Axis, Chain, ChainConfig, InitialCondition, Metropolis, RngStream};
pub use observables::{NuCurve, ObservableSeries, ObservableSet, WindingRecord};
pub use oracle::{ExactEnsemble, GeometricBound};
pub use permutation::{CycleDecomposition, JumpEnergy, PermutationState, ZeroJump};
