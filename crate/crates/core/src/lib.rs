//! Physiological-signal pipeline for predicting HDR versus LDR viewing and
//! perceived-quality ratings from EEG and peripheral recordings.
//!
//! The stages are: [`physioset`] loading and validation, [`preprocess`]
//! (resampling, filtering, re-referencing, ICA artifact removal,
//! segmentation), [`features`], [`selection`] by Fisher ranking,
//! [`classify`] with a Levenberg-Marquardt trained MLP, decision-level
//! [`fusion`], cross-validated [`evaluate`], subjective [`ratings`]
//! analysis and the [`synth`] ground-truth generator.
// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classify;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod fusion;
pub mod model;
pub mod par;
pub mod physioset;
pub mod preprocess;
pub mod ratings;
pub mod seed;
pub mod selection;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
