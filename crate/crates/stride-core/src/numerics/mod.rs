//! Numeric substrate: dense tensors, layer kernels with hand-derived
//! adjoints, Adam, and a counter-based PRNG. Everything is pure and
//! deterministic; model math runs in f32, verification paths in f64.

pub mod adam;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use adam::{AdamError, AdamState};
pub use rng::RngState;
pub use tensor::{Real, ShapeError, Tensor};
