//! Weakly-supervised temporal action localization guided by a motion prior,
//! on a synthetic two-stream corpus.
//!
//! Pipeline: [`datagen`] builds videos with known intervals, [`motiongraph`]
//! connects snippets, [`network`] produces class activations and motionness,
//! [`objective`] turns them into a loss, [`localization`] and [`metrics`]
//! score the proposals, and [`runner`] ties it together.

pub mod datagen;
pub mod error;
pub mod localization;
pub mod metrics;
pub mod motiongraph;
pub mod network;
pub mod numcore;
pub mod objective;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
