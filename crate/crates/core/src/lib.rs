//! Crop-risk monitoring from sky imagery, weather and field masks.
//!
//! The library covers the whole chain:
//!
//! 1. [`cloud`]: colour-ratio cloud probability of sky frames.
//! 2. [`motion`]: dense Lucas-Kanade flow, forward/backward validation and the
//!    sun-weighted global cloud motion.
//! 3. [`solar`]: sun position, its fisheye projection and clear-sky irradiance.
//! 4. [`forecast`]: the sun-anchored prediction zone, occlusion profile and
//!    irradiance forecast.
//! 5. [`temp`]: random-forest and MLP berry temperature regression.
//! 6. [`berry`]: connected components, selective watershed, counting and
//!    density maps over segmentation masks.
//! 7. [`metrics`]: MAPE, R², discrete Fréchet, MAE and mIoU.
//! 8. [`pipeline`]: ingestion, configuration, the synthetic sky/field
//!    simulator and the fused risk report.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod berry;
pub mod cloud;
pub mod error;
pub mod forecast;
pub mod imaging;
pub mod metrics;
pub mod motion;
pub mod pipeline;
mod rng;
pub mod solar;
pub mod temp;

pub use error::{Error, Result};
pub use imaging::{FisheyeCamera, FlowField, Pixel, Raster, SkyDirection};
