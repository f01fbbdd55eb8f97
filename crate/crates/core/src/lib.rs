//! Recovery of k-sparse binary signals from one-bit observations.
//!
//! A hidden signal `x ∈ {0,1}^n` with exactly `k` ones is observed through a
//! Gaussian sensing matrix `A` as `u = sign(Ax) ∈ {+1,-1}^m`. This crate
//! provides three recoverers for `x`:
//!
//! - a 3-layer sigmoid network trained from scratch with Adam on a
//!   cross-entropy-like loss plus an L1 penalty ([`net`], [`training`]),
//! - a soft majority-voting ensemble of independently trained networks
//!   ([`ensemble`]),
//! - an exact feasibility search over weight-`k` binary vectors, both as an
//!   exhaustive enumeration and as a pruned branch-and-bound ([`recovery`]).
//!
//! [`bench`] drives recovery-rate sweeps, training curves and timing runs and
//! writes their results as CSV.
//!
//! All computation is in `f64`. Every random quantity is drawn from a stream
//! derived from a master seed, see [`signal::derive_seed`].

pub mod bench;
pub mod ensemble;
pub mod error;
pub mod net;
pub mod recovery;
pub mod signal;
pub mod training;

pub use ensemble::EnsembleModel;
pub use error::{Error, Result};
pub use net::{BinaryEstimate, NetParams, SoftOutput};
pub use recovery::{BranchAndBound, Exhaustive, FeasibilityInstance, RecoveryOutcome};
pub use signal::{BinaryObservation, SensingMatrix, SparseSignal};
pub use training::{Recoverer, TrainingConfig, TrainingLog};
