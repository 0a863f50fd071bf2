//! Classification of orchard weed-management practices (mowing, tillage,
//! chemical spraying, no practice) from multispectral satellite time series.
//!
//! The pipeline runs per-pixel observations through cloud screening and
//! regular-grid interpolation, derives NDVI, first differences and rates of
//! change, aggregates pixels to one vector per parcel, and trains random
//! forest, gradient-boosted tree or k-NN classifiers on the result. A
//! synthetic scene generator provides labeled data with known structure.

pub mod domain;
pub mod error;
pub mod eval;
pub mod features;
pub mod learn;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod synth;

pub use domain::{
    ndvi_band_pair, validate_observation, BandDescriptor, Id, OrchardType, ParcelRecord, Sensor,
    SensorId, SpectralObservation, TimeSeries, WeedClass,
};
pub use error::{Error, ErrorCategory, Result};
