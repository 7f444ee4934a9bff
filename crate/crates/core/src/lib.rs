//! Salience-aware object detection toolkit.
//!
//! The crate is organized around one pipeline:
//!
//! - [`dataset`]: the salience-annotated annotation schema, its JSON-lines
//!   reader/writer, structural validation, statistics, splitting and
//!   dual-annotation diffing.
//! - [`geometry`]: IOU, greedy prediction/ground-truth matching and the
//!   nearest-ground-truth salience weight lookup.
//! - [`loss`]: focal loss, the salience-sensitive focal loss and their
//!   analytic logit gradients, plus the L1 box regression term.
//! - [`detector`]: synthetic scenes and a three-layer feed-forward detector
//!   head trained with either loss.
//! - [`eval`]: confidence-threshold sweeps with precision, recall over all
//!   objects, recall over salient objects and their difference.
//! - [`plot`]: deterministic SVG line charts for the sweep curves.
//! - [`config`]: the TOML run configuration shared by the CLI.
//! - [`experiment`]: the weighted-versus-unweighted training comparison.

pub mod bbox;
pub mod config;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod loss;
pub mod plot;

pub use bbox::BBox;
pub use error::{Error, Result};
