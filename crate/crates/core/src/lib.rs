//! Stationary random nuclear configurations and their classical statistics.

pub mod config;
pub mod electrostatics;
pub mod ergodic;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod moments;
pub mod rng;
pub mod spatial;
pub mod stats;
pub mod vec3;

pub use error::{Error, Result};
