//! Memory-constrained scheduling for LLM inference serving.

pub mod error;
pub mod lp;
pub mod model;
pub mod schedulers;
pub mod selectors;
pub mod sim;
pub mod verify;
pub mod workloads;

pub use error::{Error, Result};
