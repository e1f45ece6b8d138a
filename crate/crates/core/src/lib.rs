//! Adaptive dual-window LiDAR tracking of a small aerial target.
//!
//! Two estimators run on sparse and dense sliding-window integrations of
//! the scan stream. Window lengths follow the target distance and the two
//! estimates are fused by inverse covariance intersection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod error;
pub mod eval;
pub mod filters;
pub mod fusion;
pub mod integration;
pub mod model;
pub mod pipeline;
pub mod range_image;
pub mod scan_sim;

pub use error::{Error, Result};
