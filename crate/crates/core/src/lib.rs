//! Laboratory for the gradient-based hardness of learning k-majority.
//!
//! The crate is organized bottom-up:
//!
//! - [`combinatorics`]: exact binomial/polynomial arithmetic behind the support
//!   counting identities, with brute-force oracles.
//! - [`majority`]: sign vectors, supports, the MAJ/PAR targets, datasets and losses.
//! - [`model`]: the positional-attention transformer, a linear probe, analytic
//!   gradients and the checkpoint format.
//! - [`oracle`]: support families, mean gradients, gradient variance, the Gram
//!   frame bound, the ε-approximate gradient oracle and the noninformative set Q.
//! - [`harness`]: concentration bounds, theorem bound evaluators, reproducible
//!   training runs and CSV/JSON reporting behind the `majlab` CLI.
//!
//! Indices are 0-based throughout the API. Supports print 1-based (`{1,2}`) in
//! human-facing output and in the dataset file format.

pub mod combinatorics;
pub mod harness;
pub mod majority;
pub mod model;
pub mod oracle;
pub mod rng;

pub use combinatorics::{CountingInstance, ExactRatio, IntegerPolynomial};
pub use majority::{LabeledDataset, Predictor, SignVector, Support};
pub use model::{LinearProbe, ModelConfig, RecursionMode, TransformerModel, TransformerParams};
pub use oracle::{OracleConfig, OracleDirection, SupportFamily};

/// Library version echoed into every report and artifact header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
