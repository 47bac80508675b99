//! Named parameters, shared transformer layers, and the optimizer.

pub mod layers;
mod optim;
mod params;

pub use optim::{AdamW, CosineSchedule};
pub use params::{accumulate_grads, Graph, Param, ParamStore};
