//! Contrastive pre-training for relation extraction, at desk scale.
//!
//! The crate covers the full loop: dependency-path-preserving text
//! augmentation ([`augment`]) over pre-parsed sentences ([`depgraph`]),
//! corpus enrichment from knowledge-base pair lists ([`kbgen`]), a small
//! trainable transformer encoder with exact analytic gradients
//! ([`encoder`]), the batch contrastive loss and projection head
//! ([`contrastive`]), pre-training and fine-tuning orchestration
//! ([`pipeline`]), and evaluation including the prediction-shift
//! rationale-faithfulness metric ([`eval`]).

pub mod augment;
pub mod contrastive;
pub mod depgraph;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod kbgen;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
