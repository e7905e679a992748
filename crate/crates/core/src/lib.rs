//! Streaming motion forecasting.
//!
//! Replays agent-trajectory logs frame by frame, queries multi-modal
//! futures for every active agent, propagates occluded agents with
//! predicted motion, and refines predictions across frames with a
//! differentiable Kalman filter whose observation noise is learned.

pub mod dfilter;
pub mod error;
pub mod experiment;
pub mod forecast;
pub mod metrics;
pub mod nn;
pub mod scenario;
pub mod streamer;
pub mod types;

pub use error::{Error, Result};
