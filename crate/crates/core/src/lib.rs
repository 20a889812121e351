//! Sample-adaptive automatic data augmentation for time-series classification.
//!
//! The crate bundles the pieces needed to train and compare augmentation
//! policies end to end:
//!
//! - [`transforms`]: seeded time-series augmentations and the single
//!   distortion-magnitude mapping.
//! - [`policy`]: the weighted-loss (W-Augment), loss-trimming (α-trimmed) and
//!   RandAugment policies.
//! - [`model`]: a small feed-forward classifier with explicit backward pass
//!   and RMSProp.
//! - [`trainer`]: the mini-batch loop with early stopping and LR-on-plateau.
//! - [`data`]: UCR-style loaders and the financial windowing pipeline.
//! - [`backtest`]: long-short portfolio construction and risk metrics.
//! - [`search`]: grid search over the magnitude/trim grid and subset sweeps.
//! - [`cli`]: the `adaptaug` command-line front end.

pub mod backtest;
pub mod cli;
pub mod data;
mod error;
pub mod model;
pub mod policy;
pub mod rng;
pub mod search;
pub mod trainer;
pub mod transforms;

pub use error::{Error, Result};
