//! Minimal neural-network core: dense f64 tensors, a reverse-mode tape,
//! a named parameter store with Adam, a deterministic counter-based RNG,
//! and a finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod rng;
pub mod tensor;

pub use adam::{ParamEntry, ParamStore};
pub use gradcheck::{grad_check, CoordMismatch, GradCheckReport};
pub use graph::{Graph, NodeId, LOG_FLOOR};
pub use rng::Rng;
pub use tensor::Tensor;
