//! Certified robustness for single-layer decoder-only transformer text
//! classifiers under programmable string perturbation spaces.
//!
//! The toolkit certifies and trains a tiny decoder-only attention classifier
//! to be robust against budgeted string rewrites (deletions, substitutions,
//! synonym swaps, duplications). Causal softmax attention is evaluated as a
//! numerically stable two-layer recurrence, which lets interval abstractions
//! of the hidden state flow through one position at a time; a dynamic
//! program over perturbed prefixes then yields a sound upper bound on the
//! adversarial margin, a certification verdict, and a differentiable loss
//! for robust training.
//!
//! Module map:
//!
//! - [`numerics`] — dense f64 tensors and a reverse-mode scalar tape.
//! - [`interval`] — closed intervals, boxes, and sound abstract transformers.
//! - [`attention`] — exact attention in softmax and recurrence form, plus the
//!   abstract one-step transformer.
//! - [`model`] — the evaluated architecture, concrete/abstract forward passes,
//!   bit-exact serialization.
//! - [`perturb`] — the perturbation-space DSL, enumeration, resource loading.
//! - [`cert`] — the certification engine (prefix DP, final-length branches,
//!   final-query hull, verdicts).
//! - [`train`] — training loops (normal / augment / worst-of-k / certified)
//!   and the three evaluation metrics.
//! - [`data`] — TSV dataset ingestion and vocabulary handling.
//! - [`synth`] — deterministic SST2-style dataset synthesis for experiments.
//! - [`cli`] — the command-line surface (`train`, `certify`, `eval`,
//!   `enumerate`, `selftest`).
//!
//! See the `examples/` directory for one runnable walkthrough per capability.

pub mod attention;
pub mod cert;
pub mod cli;
pub mod data;
pub mod error;
pub mod interval;
pub mod model;
pub mod numerics;
pub mod perturb;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
