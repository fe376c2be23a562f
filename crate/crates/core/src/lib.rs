//! Multi-level validation engine for multivariate industrial time series.
//!
//! The engine stacks independent validation levels: static amplitude bounds
//! (II), univariate detectors (III), contextual anomaly detection by a
//! windowed denoising autoencoder (IV), cross-checks against simulation
//! results (V), and temporal causal discovery for training-dataset
//! validation (VI). A fusion step labels detections as sensor faults or
//! process events, and reporting emits heatmaps and machine-readable files.

pub mod autoencoder;
pub mod causal;
pub mod config;
pub mod data;
pub mod detectors;
pub mod error;
pub mod fusion;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod simcheck;
pub mod synth;
pub mod verdict;

pub use error::{Error, Result};
