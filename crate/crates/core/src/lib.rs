//! Inhomogeneous Lévy random evolutions driven by semi-Markov switching:
//! simulation, exact evaluation of propagators, averaging limits and
//! numerical diagnostics.

pub mod averaging;
pub mod error;
pub mod law;
pub mod levy;
pub mod mc;
pub mod propagator;
pub mod quadrature;
pub mod random_evolution;
pub mod rng;
pub mod semi_markov;
pub mod test_function;

pub use error::{ErgodicityFailure, Error, Result};
pub use law::{Atom, AtomLaw};
pub use levy::{averaged_characteristics, CoefficientFn, JumpLaw, JumpPart, LevyModel, StateLevy};
pub use mc::{McBudget, McEstimate};
pub use propagator::{EvalMode, FrozenGenerator, Generator, Propagator, Residual, ResidualRecord};
pub use random_evolution::{JumpOperatorFamily, RandomEvolution, ScaledPath};
pub use rng::StreamKey;
pub use semi_markov::{SemiMarkovModel, SojournLaw, StateSpace, StationaryData};
pub use test_function::{Observable, Smooth, TestFunction};
