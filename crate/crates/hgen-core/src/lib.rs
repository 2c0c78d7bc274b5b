//! Headline-generation experimentation toolkit.
//!
//! The crate covers the full loop for contextual-fusion headline generation
//! experiments at desk scale:
//!
//! - [`corpus`]: annotated news corpus loading, validation, splitting, and
//!   descriptive statistics (cross-tabs, length/vocabulary figures, headline
//!   n-gram novelty, histograms);
//! - [`preprocess`]: text normalization and word-level token-id sequences;
//! - [`fusion`]: baseline (content-only) and fused (content + category +
//!   aspect + sentiment) model inputs with separator tokens;
//! - [`model`]: a from-scratch encoder-decoder transformer small enough to
//!   train on a CPU, with a finite-difference gradient check;
//! - [`metrics`]: BLEU, ROUGE-1/2/L, METEOR, and BERTScore implemented from
//!   their definitions;
//! - [`harness`]: configuration-driven experiment runs, persisted run
//!   records, and baseline-vs-fused comparison tables;
//! - [`synth`]: deterministic synthetic corpora for calibration and tests.

pub mod corpus;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod text;
