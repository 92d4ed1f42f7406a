//! Dual-domain recommendation with multi-modal disentangled user embeddings.
//!
//! The pipeline: per-domain graph collaborative filtering over implicit
//! feedback, projection of precomputed modality features, MLP
//! disentanglement of user representations into domain-common and
//! domain-specific parts, Laplace obfuscation of those parts before any
//! cross-domain exchange, contrastive alignment/separation objectives, and
//! a leave-one-out ranking evaluator.
//!
//! Everything differentiable runs on the reverse-mode [`tape::Tape`]; the
//! two domain trainers only ever exchange [`privacy::ObfuscatedBundle`]
//! matrices, over an in-process queue pair or a socket.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod disentangle;
pub mod error;
pub mod eval;
pub mod graph;
pub mod losses;
pub mod modal;
pub mod numcheck;
pub mod params;
pub mod privacy;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{CoreError, Result};
pub use tensor::Tensor2;
