//! Engagement recognition for lecture-hall video.
//!
//! - [`cascade`]: behaviour annotations to binary engagement labels
//! - [`dataset`]: annotation files, crop stores, image cubes, sampling
//! - [`nn`]: from-scratch CNN (AlexNet-style) with SGD training
//! - [`baseline`]: HOG, PCA and linear SVM comparison pipeline
//! - [`eval`]: metrics and the evaluation protocols
//! - [`interest_map`]: heat overlay of disengaged students

pub mod baseline;
pub mod cascade;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod framing;
pub mod interest_map;
pub mod nn;
pub mod rng;

pub use error::{Error, ExitCode, Result};
