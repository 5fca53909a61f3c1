//! Acoustic anomaly detection for microcontroller-class targets.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`audio`] decodes WAV clips, resamples them to 16 kHz and fixes their length;
//!    [`mfcc`] turns each clip into a 13x32 MFCC map flattened to 416 values.
//! 2. [`nn`] trains a 416-128-64-1 dense classifier (61,825 parameters) with Adam,
//!    dropout, learning-rate reduction on plateau and early stopping.
//! 3. [`quant`] converts the trained model to int8 with post-training calibration
//!    and runs it with an integer-only kernel.
//! 4. [`model_store`] writes both flavors to a single self-contained `.esad` file
//!    (the int8 model fits in 64 KiB).
//!
//! [`dataset`] handles UrbanSound8K metadata, the binary class grouping and the
//! stratified split; [`metrics`] computes the evaluation report.

pub mod audio;
pub mod dataset;
pub mod feature_cache;
pub mod metrics;
pub mod mfcc;
pub mod model_store;
pub mod nn;
pub mod quant;

use thiserror::Error;

/// Any error produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Audio(#[from] audio::AudioError),
    #[error(transparent)]
    Feature(#[from] mfcc::FeatureError),
    #[error(transparent)]
    Net(#[from] nn::NetError),
    #[error(transparent)]
    Quant(#[from] quant::QuantError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    ModelFile(#[from] model_store::ModelFileError),
    #[error(transparent)]
    Cache(#[from] feature_cache::CacheError),
}
