//! Minimal differentiable-computation kernel.
//!
//! Everything runs in f64. Each block implements a paired forward/backward
//! (explicit static graph, no tape); composition happens in the policy
//! network, which chains the backwards by hand and gradient-checks the
//! whole stack against central finite differences.

pub mod ops;
mod store;
mod tensor;

pub use store::{seeded_init, AdamParams, InitScheme, ParameterStore};
pub use tensor::Tensor2D;
