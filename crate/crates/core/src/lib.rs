#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
//! Monte Carlo tree search over temporally-extended macro-actions, with node
//! expansion and selection biased by a pluggable prior policy.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the harness and CLI use.

pub mod error;
pub mod harness;
pub mod macrolib;
pub mod prior;
pub mod scalar;
pub mod search;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MacroAction = macrolib::MacroAction<f64>;
pub type PrimitiveAction = macrolib::PrimitiveAction<f64>;
pub type MacroLibrary = macrolib::MacroLibrary<f64>;
pub type Trajectory = macrolib::Trajectory<f64>;
pub type StateVec = world::StateVec<f64>;
pub type Observation = world::Observation<f64>;
pub type BlockNav = world::BlockNav<f64>;
pub type ScriptedExpertPrior = world::ScriptedExpertPrior<f64>;
pub type ProbabilityVector = prior::ProbabilityVector<f64>;
pub type CandidateSet = prior::CandidateSet<f64>;
pub type SearchOutcome = search::SearchOutcome<f64>;

pub type MacroActionF32 = macrolib::MacroAction<f32>;
pub type MacroLibraryF32 = macrolib::MacroLibrary<f32>;
pub type ProbabilityVectorF32 = prior::ProbabilityVector<f32>;
