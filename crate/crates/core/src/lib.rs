//! Weakly-supervised audio-visual video parsing at desk scale.
//!
//! The crate is organized bottom-up:
//!
//! - [`matrix`], [`tape`], [`gradcheck`], [`adam`], [`rng`] — a minimal f64
//!   tensor core with reverse-mode differentiation, finite-difference
//!   verification, the Adam update, and a pinned deterministic PRNG.
//! - [`encoder`] — a small hybrid self-/cross-attention audio-visual encoder.
//! - [`labels`], [`leap`] — label-embedding initialization and the
//!   label-query cross-attention decoder with its prediction heads.
//! - [`mmil`] — the multi-instance-learning baseline decoder.
//! - [`loss`] — the training objective: multi-level BCE, the event-set IoU
//!   similarity target, and the audio-visual similarity regularizer.
//! - [`metrics`] — segment- and event-level F1 evaluation, Type@AV,
//!   Event@AV, and the overlapping/non-overlapping split.
//! - [`data`] — a seeded synthetic dataset generator and the JSONL
//!   feature-file loader.

pub mod adam;
pub mod canonical;
pub mod data;
pub mod encoder;
pub mod gradcheck;
pub mod labels;
pub mod leap;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod mmil;
pub mod rng;
pub mod tape;

pub use adam::AdamState;
pub use gradcheck::check_gradients;
pub use matrix::Matrix;
pub use rng::Rng;
pub use tape::{NodeId, Tape};
