//! Core building blocks for benchmarking machine-learning NetFlow intrusion
//! detectors: dataset loading and feature projection, train/eval splitting,
//! native learner implementations, detector pipelines, adversarial
//! perturbation, metric computation, and statistical comparison.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root pin the default `f64` instantiations.

pub mod evaluator;
pub mod flowstore;
pub mod learners;
pub mod pipelines;
pub mod seeding;
pub mod splitter;
pub mod stats;
pub mod threats;

use std::fmt;

/// Scalar type for feature values and learner arithmetic.
///
/// Blanket-implemented for every float type that satisfies the bounds, which
/// in practice means `f32` and `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + fmt::Debug
    + fmt::Display
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: num_traits::Float
        + num_traits::NumAssign
        + num_traits::FromPrimitive
        + num_traits::ToPrimitive
        + fmt::Debug
        + fmt::Display
        + serde::Serialize
        + serde::de::DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// Default-precision aliases. The benchmark binary works in `f64`; the `f32`
/// aliases exist for memory-constrained embedding of the same code paths.
pub type Dataset = flowstore::Dataset<f64>;
pub type Dataset32 = flowstore::Dataset<f32>;
pub type FeatureView = flowstore::FeatureView<f64>;
pub type FeatureView32 = flowstore::FeatureView<f32>;
pub type FlowRecord = flowstore::FlowRecord<f64>;
pub type FlowRecord32 = flowstore::FlowRecord<f32>;
pub type TrainedModel = learners::TrainedModel<f64>;
pub type TrainedModel32 = learners::TrainedModel<f32>;
pub type TrainedPipeline = pipelines::TrainedPipeline<f64>;
pub type TrainedPipeline32 = pipelines::TrainedPipeline<f32>;
