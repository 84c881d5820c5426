//! Monte Carlo laboratory for random nested subspaces.
//!
//! * [`grassmann`]: Haar unitaries, unitary-invariant random subspaces,
//!   projections and complements.
//! * [`matryoshka`]: dimension schedules, the ratio sequence `r_k`, the nested
//!   random-subspace process and its residual trajectories.
//! * [`urn`]: the coin-spending protocols that form its classical twin.
//! * [`hamiltonian`]: renewal-driven random Hamiltonians and their spectral and
//!   matrix-element statistics.
//! * [`harness`]: experiment configs, the seeded parallel engine, reports and
//!   the built-in verification suite.

pub mod error;
pub mod grassmann;
pub mod hamiltonian;
pub mod harness;
pub mod linalg;
pub mod matryoshka;
pub mod stats;
pub mod stream;
pub mod urn;

pub use error::{Error, Result};
pub use grassmann::{ComplexVector, Frame};
pub use stream::RandomStream;
