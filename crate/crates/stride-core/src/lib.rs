//! Forecasting foot center-of-pressure (COP) and time-of-impact (TOI) from
//! shank-camera video, end to end: a from-scratch CNN-RNN forecaster, a
//! deterministic synthetic stereo gait-clip generator, the fine-tuning and
//! cross-validation harness, forecast-quality analytics, and linear
//! mixed-effects error modelling.
//!
//! Model math runs in f32; statistics and gradient checks in f64. Every
//! path is deterministic given its seed.

pub mod datagen;
pub mod eval;
pub mod hash;
pub mod lmm;
pub mod model;
pub mod numerics;
pub mod training;

pub use model::{ForecasterConfig, ForecasterModel, StreamMode, StreamState, Task};
pub use numerics::{AdamState, Real, RngState, ShapeError, Tensor};
