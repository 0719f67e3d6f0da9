//! Mechanism-sparsity disentanglement toolkit.
//!
//! The crate has three layers:
//!
//! * a small reverse-mode differentiation engine ([`tape`], [`tensor`],
//!   [`adam`], [`rng`]) sufficient to train every network in the project,
//! * the modelling stack: synthetic sequential generators with known latent
//!   causal structure ([`synth`]), the masked-prior sequential VAE ([`model`])
//!   and its regularized training loop ([`train`]),
//! * evaluation and verification: disentanglement metrics ([`metrics`]) and
//!   executable checkers for the identifiability criteria ([`theory`]).
//!
//! Everything is deterministic given explicit seeds; no global RNG state.

pub mod adam;
pub mod bipartite;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod theory;
pub mod train;

pub use error::CoreError;
pub use tensor::Tensor;
