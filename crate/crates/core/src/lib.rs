//! Hand-eye calibration without a calibration object: scan the robot base,
//! register the scan against the base model, and close the kinematic chain.

pub mod error;
pub mod fixtures;
pub mod harness;
pub mod baseline;
pub mod calibrate;
pub mod cloud;
pub mod geom;
pub mod kinematics;
pub mod registration;
pub mod scalar;
pub mod scansim;

pub use error::{Error, Result};
pub use geom::{average_transforms, rre, rte, PoseError, RigidTransform};
pub use scalar::Real;

/// Double-precision rigid transform, the default throughout the pipeline.
pub type Transform = RigidTransform<f64>;
/// Single-precision rigid transform.
pub type Transform32 = RigidTransform<f32>;
