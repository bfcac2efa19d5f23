//! No-reference stereoscopic image quality assessment.
//!
//! The crate trains and evaluates a three-branch multi-score patch CNN that
//! predicts left, right, stereo, and global quality scores for a stereo
//! image pair. It is self-contained: a small dense-tensor autodiff engine,
//! the network itself, a PPM/patch data pipeline with synthetic dataset
//! generation, rank-correlation metrics, and the training/evaluation
//! protocols.

pub mod data;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod tensor;

/// Side length of the square patches every stage of the pipeline works on.
pub const PATCH_SIZE: usize = 32;
