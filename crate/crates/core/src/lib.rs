//! Foveated-attention visual explanations for image classifiers.
//!
//! The pipeline renders an image at full fidelity around a movable focus
//! point and blurred elsewhere, descends the classification loss with respect
//! to the focus coordinates to trace a scanpath, and turns the visited
//! fixations into a normalized attribution map. A metric suite (faithfulness,
//! localization, human-gaze correlation) and a small trainable convolutional
//! classifier make the whole loop runnable on a laptop CPU.
//!
//! Everything numeric is generic over the [`scalar::Scalar`] element type;
//! the aliases at the crate root pin the shipped double-precision
//! instantiation used by the command-line tools.

pub mod attribution;
pub mod foveation;
pub mod io;
pub mod metrics;
pub mod predictor;
pub mod rng;
pub mod scalar;
pub mod scanpath;
pub mod tensor;

pub use scalar::Scalar;
pub use tensor::{Array, Graph, TensorError, Var};

/// Double-precision computation graph.
pub type Graph64 = tensor::Graph<f64>;
/// Double-precision dense array.
pub type Array64 = tensor::Array<f64>;
/// Double-precision classifier.
pub type Predictor64 = predictor::Predictor<f64>;
/// Double-precision foveation parameters.
pub type FoveationConfig64 = foveation::FoveationConfig<f64>;
/// Double-precision accumulated visibility state.
pub type FoveationState64 = foveation::FoveationState<f64>;
/// Double-precision scanpath.
pub type Scanpath64 = scanpath::Scanpath<f64>;
/// Double-precision attribution map.
pub type AttributionMap64 = attribution::AttributionMap<f64>;
