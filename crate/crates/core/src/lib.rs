//! Application-aware cooperative time allocation for D2D-connected devices.
//!
//! A receding-horizon controller solves a utility maximization over the next
//! `omega` slots, applies the first slot and slides forward. The engine drives
//! it, or one of the baselines, over a trace of device capacities.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod controller;
pub mod engine;
pub mod error;
pub mod model;
pub mod output;
pub mod parallel;
pub mod problem;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
