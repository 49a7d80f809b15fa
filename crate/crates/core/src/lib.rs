//! On-line multi-person 3D pose reconstruction and tracking from calibrated
//! multi-camera 2D pose detections.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affinity;
pub mod assignment;
pub mod config;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod pose;
mod scalar;
pub mod synth;
pub mod tracker;

pub use scalar::Scalar;

pub type Camera = geometry::CameraCalibration<f64>;
pub type Pose = pose::Pose2D<f64>;
pub type Skeleton = pose::Skeleton3D<f64>;
pub type Config = config::TrackerConfig<f64>;
pub type Frame = tracker::FrameBundle<f64>;
pub type MultiTracker = tracker::Tracker<f64>;
