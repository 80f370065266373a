//! Toolkit for learning shock propagation through porous and lattice media.
//!
//! - [`field`]: frames, sequences, normalization and the binary container
//! - [`hydro`]: a small 2D compressible-Euler solver that generates data
//! - [`nn`]: the convolutional-recurrent surrogate, its gradients and Adam
//! - [`train`]: teacher-forced training and autoregressive rollout
//! - [`metrics`]: field-comparison metrics and their aggregation
//! - [`config`]: `key = value` configuration files

pub mod field;
pub mod config;
pub mod hydro;
pub mod nn;
pub mod train;
pub mod metrics;
