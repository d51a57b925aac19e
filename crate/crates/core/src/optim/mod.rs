//! Gradients of the fitting objective, Adam, the two-stage schedule and
//! camera initialization.

mod adam;
mod camera;
mod fit;
pub mod gradcheck;
mod grad;

pub use adam::{adam_step, AdamParams};
pub use camera::{estimate_camera, look_at, CameraEstimate, CameraSearchConfig};
pub use fit::{fit, init_scale, FitConfig, FitResult, FitState};
pub use grad::{gradients, ClassSet};

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::skeleton::{PoseSequence, ShapeParams};

/// Groups of optimization variables that share a learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarClass {
    Scale,
    BoneScales,
    Field,
    SkinLogits,
    /// Per-frame root rotation (4) and translation (3).
    Root,
    /// Per-frame joint quaternions, `T×K×4`.
    Joints,
}

impl VarClass {
    pub const ALL: [VarClass; 6] =
        [VarClass::Scale, VarClass::BoneScales, VarClass::Field, VarClass::SkinLogits, VarClass::Root, VarClass::Joints];

    pub fn name(self) -> &'static str {
        match self {
            VarClass::Scale => "scale",
            VarClass::BoneScales => "bone_scales",
            VarClass::Field => "field",
            VarClass::SkinLogits => "skin_logits",
            VarClass::Root => "root",
            VarClass::Joints => "joints",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// One flat vector per variable class. Used for variables, gradients and
/// Adam moments alike.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarBlocks {
    blocks: [Vec<f64>; 6],
}

impl VarBlocks {
    pub fn get(&self, c: VarClass) -> &[f64] {
        &self.blocks[c.index()]
    }

    pub fn get_mut(&mut self, c: VarClass) -> &mut Vec<f64> {
        &mut self.blocks[c.index()]
    }

    /// Zeros shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        VarBlocks { blocks: self.blocks.clone().map(|b| vec![0.0; b.len()]) }
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, o: &VarBlocks) -> bool {
        self.blocks.iter().zip(&o.blocks).all(|(a, b)| a.len() == b.len())
    }

    /// First non-finite entry as `(class, index)`.
    pub fn first_non_finite(&self) -> Option<(VarClass, usize)> {
        VarClass::ALL
            .into_iter()
            .find_map(|c| self.get(c).iter().position(|v| !v.is_finite()).map(|i| (c, i)))
    }

    /// Flattened variables of a scene state.
    pub fn pack(params: &ShapeParams, poses: &PoseSequence) -> Self {
        let mut b = VarBlocks::default();
        b.get_mut(VarClass::Scale).push(params.scale);
        *b.get_mut(VarClass::BoneScales) = params.bone_scales.clone();
        *b.get_mut(VarClass::Field) = params.displacement.params();
        *b.get_mut(VarClass::SkinLogits) = params.skin_logits.clone();
        let root = b.get_mut(VarClass::Root);
        for f in &poses.frames {
            root.extend(f.root.rotation.to_array());
            root.extend(f.root.translation.to_array());
        }
        let joints = b.get_mut(VarClass::Joints);
        for f in &poses.frames {
            for q in &f.joints {
                joints.extend(q.to_array());
            }
        }
        b
    }

    /// Writes the variables back; inverse of [`Self::pack`] for matching shapes.
    pub fn unpack(&self, params: &mut ShapeParams, poses: &mut PoseSequence) -> Result<()> {
        if !self.same_shape(&VarBlocks::pack(params, poses)) {
            return Err(Error::dim("variable blocks do not match the scene state"));
        }
        params.scale = self.get(VarClass::Scale)[0];
        params.bone_scales.copy_from_slice(self.get(VarClass::BoneScales));
        params.displacement.set_params(self.get(VarClass::Field));
        params.skin_logits.copy_from_slice(self.get(VarClass::SkinLogits));
        for (f, r) in poses.frames.iter_mut().zip(self.get(VarClass::Root).chunks(7)) {
            f.root.rotation = Quat::new(r[0], r[1], r[2], r[3]);
            f.root.translation = Vec3::new(r[4], r[5], r[6]);
        }
        let k = params.bone_scales.len();
        for (f, js) in poses.frames.iter_mut().zip(self.get(VarClass::Joints).chunks(4 * k)) {
            for (q, j) in f.joints.iter_mut().zip(js.chunks(4)) {
                *q = Quat::new(j[0], j[1], j[2], j[3]);
            }
        }
        Ok(())
    }
}
