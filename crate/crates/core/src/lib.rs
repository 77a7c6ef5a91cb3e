//! Symmetric self-similar jump processes on the triadic Cantor set.
//!
//! Points of the Cantor set are binary digit sequences; [`Word`] holds a
//! finite prefix. The process `SSS(γ, θ)` jumps at level `k` with rate
//! `γθ^k`, flipping digit `k` and redrawing every later digit. Its
//! truncation to `n` digits is a finite Markov chain with generator `Q_n`,
//! diagonalized exactly by Haar functions.
//!
//! - [`generator`]: `Q_n` as a dense matrix or applied to cylindric functions.
//! - [`spectral`]: eigenvalues, Haar eigenvectors and kernels `exp(t Q_n)`.
//! - [`expm`]: an independent matrix exponential used as an oracle.
//! - [`simulator`]: exact event-driven paths and Monte Carlo kernels.
//! - [`confined`]: the process conditioned to stay in a cylinder.
//! - [`analysis`]: mixing curves, displacement moments, small-time scaling.

pub mod analysis;
pub mod checks;
pub mod confined;
pub mod error;
pub mod expm;
pub mod generator;
pub mod io;
pub mod isometry;
pub mod params;
pub mod rng;
pub mod simulator;
pub mod spectral;
pub mod word;

pub use error::{Error, Result};
pub use isometry::Isometry;
pub use params::Params;
pub use rng::StreamKey;
pub use word::{Separation, Word};
