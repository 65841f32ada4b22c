//! Sketch-based stream frequency estimation with generative recovery.
//!
//! The crate is organized around the lifecycle of a frequency-estimation
//! experiment:
//!
//! * [`stream`] — stream traces, synthetic workload generators, ground-truth
//!   accounting, evaluation metrics, and perturbation helpers.
//! * [`sketch`] — the constant-time data plane: count-min / count-sketch
//!   counter arrays, a Bloom filter for key tracking, an ostracism-style
//!   augmented filter for hot keys, and the memory budgeter that wires them
//!   into a [`sketch::FloreDataPlane`].
//! * [`linsys`] — the sketch viewed as a linear operator `b = Phi f`:
//!   explicit apply/adjoint, range/null-space splits, restricted-isometry
//!   probes, dense comparison ensembles, and sparse-recovery baselines
//!   (orthogonal matching pursuit, iterative least squares).
//! * [`em`] — multiplicative expectation-maximization refinement of
//!   count-min estimates under the non-negative linear model.
//! * [`model`] — the invertible generative recovery model: paired
//!   autoencoders around an affine coupling flow, trained against
//!   EM-refined targets without ground truth.

pub mod em;
pub mod error;
pub mod linsys;
pub mod model;
pub mod sketch;
pub mod stream;
pub(crate) mod wire;

pub use error::{Error, Result};
