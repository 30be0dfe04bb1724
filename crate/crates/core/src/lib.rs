#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Rank-correlation inference for bivariate data observed with additive,
//! known measurement error.
//!
//! The latent density is recovered on an FFT grid by spectral division with a
//! flat-top kernel, Kendall's tau or Spearman's rho of that density is
//! computed by Monte-Carlo sampling, and a nonparametric bootstrap supplies
//! confidence intervals and tests of `H0: |theta| <= delta`.

pub mod bandwidth;
pub mod bootstrap;
pub mod correlation;
pub mod deconv;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod models;
pub mod noise;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod study;

/// A bivariate observation `(x, y)`.
pub type Point = [f64; 2];

pub use bandwidth::{bandwidth_ladder, default_ladder, select_bandwidth, BandwidthSelection};
pub use bootstrap::{bootstrap, confidence_interval, relevant_test, BootstrapResult, RateFactor, TestOutcome};
pub use correlation::{estimate_correlation, CorrelationEstimate, CorrelationMeasure, PipelineParams};
pub use deconv::{deconv_density, estimate_density, postprocess, BandwidthPair};
pub use error::{Error, Result};
pub use grid::{DensityGrid, GridSpec};
pub use kernel::FlatTopKernel;
pub use models::{ModelId, ModelSpec};
pub use noise::{NoiseFamily, NoiseSpec};
pub use report::{run_inference, InferenceReport};
pub use rng::SeedStream;
pub use study::{run_study, BandwidthRule, StudyConfig, StudyReport};
