//! Tools for multi-source abdominal label maps: scheme harmonization, NIfTI
//! label I/O, per-case segmentation metrics (Dice, Hausdorff, detection) and the
//! paired nonparametric tests used to compare segmentation models.
//!
//! The crate is organised bottom-up:
//!
//! * [`volume`] holds the voxel grid and label volume types.
//! * [`nifti`] reads and writes NIfTI-1 label volumes.
//! * [`scheme`] and [`harmonize`] define label schemes and the recipe interpreter.
//! * [`metrics`] computes Dice, exact-EDT Hausdorff distance and detection.
//! * [`stats`] and [`study`] run the omnibus and post-hoc tests and render tables.
//! * [`phantom`] generates synthetic studies with known answers.
//! * [`cohort`] and [`pipeline`] drive batch runs over a case manifest.

pub mod cohort;
pub mod error;
mod fsutil;
pub mod harmonize;
pub mod metrics;
pub mod nifti;
pub mod phantom;
pub mod pipeline;
pub mod scheme;
pub mod stats;
pub mod study;
pub mod volume;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
pub use volume::{GridSpec, Label, LabelVolume};
