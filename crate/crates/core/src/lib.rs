//! Coarse-to-fine multi-scale detection.
//!
//! A cheap pass over a low-resolution image predicts where small objects
//! are ([`labeler`] defines the training target, a detector supplies the
//! prediction). [`chipgen`] turns that prediction into a few rectangular
//! chips, only those chips are processed at the next finer scale, and
//! [`stacker`] merges the detections of every scale. [`pipeline`] runs the
//! whole cascade and counts the pixels it touched.

pub mod chipgen;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod io;
pub mod labeler;
pub mod maps;
pub mod metrics;
pub mod pipeline;
pub mod stacker;

pub use error::{Error, Result};
