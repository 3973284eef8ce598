//! Structural keypoint models for side-view cows.

pub mod commands;
pub mod confmap;
pub mod error;
pub mod geometry;
pub mod grouping;
pub mod joints;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod render;
pub mod schema;
pub mod skeleton;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
pub use geometry::Point;
pub use joints::JointId;
