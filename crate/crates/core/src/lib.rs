//! Skeletal inverse graphics: fit a stretchable-bone articulated template
//! to silhouettes and optical flow, retarget it by inverse kinematics and
//! score the result.

pub mod autodiff;
pub mod energy;
pub mod error;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod reanimate;
pub mod render;
pub mod retrieval;
pub mod skeleton;
pub mod synthetic;
pub mod workbench;

pub use error::{Error, Result};
pub use math::{Quat, Rigid, Vec3};
pub use skeleton::{FramePose, KinematicTree, PoseSequence, ShapeParams, SkeletalShape, SkinnedMesh};
