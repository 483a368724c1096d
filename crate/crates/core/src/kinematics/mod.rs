//! Articulated hand: model schema, forward kinematics, surface samples,
//! keypoints and keypoint inverse kinematics.

mod fk;
mod ik;
mod model;
mod surface;
mod transform;

pub use fk::{
    forward_kinematics, keypoints, point_jacobian, GradientAccumulator, HandConfiguration,
    HandPose,
};
pub use ik::{solve_ik, solve_ik_with, IkParams, IkSolution};
pub use model::{CollisionPrimitive, HandModel, JointKind, KeypointSpec, Link, PalmSpec};
pub use surface::{sample_hand_surface, HandSurface, HandSurfacePoints, SurfaceSample};
pub use transform::{rotation_onto, RigidTransform};
