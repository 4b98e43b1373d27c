//! Multi-lane highway perception.
//!
//! Lane features from heterogeneous sources (camera clothoids, marking
//! points, tracked vehicles) are fused in a sliding-window pose graph with
//! switchable smoothing constraints; the fused features then feed a robust
//! clothoid multi-lane model tracked with per-lane Kalman filters. A
//! synthetic highway simulator and a ground-truth evaluation harness close
//! the loop.

pub mod clothoid;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod feature;
pub mod frame_log;
pub mod geometry;
pub mod graph;
pub mod ingest;
pub mod lane_model;
pub mod optimizer;
pub mod pipeline;
pub mod simulator;

pub use clothoid::Clothoid;
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use feature::LaneFeature;
pub use geometry::{ControlVector, Pose2};
