//! Reconstruction of the potential `a(x)` in `u_t = Δu + a(x)u` from lateral
//! boundary measurements of a single point-source experiment.

pub mod carleman_core;
pub mod config;
pub mod data_model;
pub mod error;
pub mod forward_sim;
pub mod geometry;
pub mod io;
pub mod optimizer;
pub mod phantom;
pub mod pipeline;
pub mod reconstruct;

pub use error::{Error, Result};
