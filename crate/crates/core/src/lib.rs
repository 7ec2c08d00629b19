//! Multi-view, multi-person 3D human pose estimation from calibrated RGBD
//! cameras: 2D keypoints are lifted with robust depth sampling, then fused and
//! tracked across views in world coordinates.

pub mod cloud;
pub mod depth;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod skeleton;
pub mod synth;
pub mod tracking;

pub use depth::{CrossParams, DepthImage, PoseProposal3D};
pub use geometry::{CameraCalibration, Pixel, Point3, RigidTransform, ViewId};
pub use pipeline::{DepthSource, FrameBundle, Pipeline, PipelineConfig, ViewInput};
pub use skeleton::{Keypoint2D, Pose2D, SkeletonDefinition};
pub use tracking::{FusedPose3D, FusionConfig, Tracker};
