//! Articulation model: kinematic tree, forward kinematics, stretchable
//! blend skinning and the displacement-field reparameterization.

mod deform;
mod field;
mod mesh;
mod skinning;
mod tree;

pub use deform::{canonical_vertices, deform, logits_from_weights, posed_joints, softmax_rows, ShapeParams};
pub use field::{apply_displacement, DisplacementField, Layer, DEFAULT_HIDDEN_WIDTH};
pub use mesh::{FramePose, PoseSequence, SkeletalShape, SkinnedMesh};
pub use skinning::{endpoint_weights, skin_lbs, skin_stretchable};
pub use tree::{forward_kinematics, rest_transforms, Bone, BoneTransform, BoneTransforms, KinematicTree};

pub(crate) use deform::{deform_canonical, endpoint_regions, Articulation};
