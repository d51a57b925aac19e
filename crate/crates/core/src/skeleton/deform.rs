use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{Quat, Real, Vec3};

use super::field::{apply_displacement, DisplacementField};
use super::mesh::{FramePose, SkeletalShape};
use super::skinning::{endpoint_generic, skin_stretch_generic};
use super::tree::{fk_generic, KinematicTree};

/// Floor applied to template weights before taking logarithms.
const LOGIT_FLOOR: f64 = 1e-12;

/// Optimization variables shared across frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    pub scale: f64,
    pub bone_scales: Vec<f64>,
    pub displacement: DisplacementField,
    /// Row-major `N×K`, mapped to the simplex by a row-wise softmax.
    pub skin_logits: Vec<f64>,
}

impl ShapeParams {
    /// Parameters that reproduce the template exactly: unit scales, a zero
    /// field and logits equal to the log template weights.
    pub fn identity(shape: &SkeletalShape, width: usize) -> Self {
        ShapeParams {
            scale: 1.0,
            bone_scales: vec![1.0; shape.num_bones()],
            displacement: DisplacementField::zeros(width),
            skin_logits: logits_from_weights(&shape.mesh.skinning),
        }
    }

    /// Fitting initialization: like [`Self::identity`] but with randomly
    /// initialized hidden layers (the last layer stays zero).
    pub fn init<R: Rng>(shape: &SkeletalShape, width: usize, rng: &mut R) -> Self {
        ShapeParams { displacement: DisplacementField::init(width, rng), ..Self::identity(shape, width) }
    }

    pub fn validate(&self, shape: &SkeletalShape) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::invariant("scale", "must be positive and finite"));
        }
        if self.bone_scales.len() != shape.num_bones() {
            return Err(Error::invariant("bone_scales", "length differs from bone count"));
        }
        if let Some(k) = self.bone_scales.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invariant(format!("bone_scales[{k}]"), "must be positive and finite"));
        }
        if self.skin_logits.len() != shape.num_vertices() * shape.num_bones() {
            return Err(Error::invariant("skin_logits", "shape differs from N×K"));
        }
        if self.skin_logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::invariant("skin_logits", "non-finite logit"));
        }
        self.displacement.validate()
    }

    pub fn skin_weights(&self, bones: usize) -> Vec<f64> {
        softmax_rows(&self.skin_logits, bones)
    }
}

pub fn logits_from_weights(weights: &[f64]) -> Vec<f64> {
    weights.iter().map(|w| w.max(LOGIT_FLOOR).ln()).collect()
}

/// Row-wise normalized exponentials.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    softmax_rows_generic(logits, k)
}

fn softmax_rows_generic<T: Real>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let m = row.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<T> = row.iter().map(|v| (*v - m).exp()).collect();
        let mut sum = ex[0];
        for e in &ex[1..] {
            sum = sum + *e;
        }
        let inv = T::cst(1.0) / sum;
        out.extend(ex.into_iter().map(|e| e * inv));
    }
    out
}

/// Inputs to the articulation stage shared by every frame.
pub(crate) struct Articulation<'a, T> {
    pub tree: &'a KinematicTree,
    pub canonical: &'a [Vec3<T>],
    pub weights: &'a [T],
    pub scale: T,
    pub bone_scales: &'a [T],
}

impl<T: Real> Articulation<'_, T> {
    /// Forward kinematics followed by stretchable skinning. The rest
    /// skeleton is scaled by the global scale so that bones stay aligned
    /// with the scaled mesh.
    pub fn pose(&self, root_rot: &Quat<T>, root_trans: &Vec3<T>, joints: &[Quat<T>]) -> Vec<Vec3<T>> {
        let k = self.tree.len();
        let ones = vec![T::cst(1.0); k];
        let ident = vec![Quat::<T>::identity(); k];
        let rest = fk_generic(self.tree, self.scale, &ones, &ident, &Quat::identity(), &Vec3::zeros());
        let posed = fk_generic(self.tree, self.scale, self.bone_scales, joints, root_rot, root_trans);
        let endpoint = endpoint_generic(self.canonical, &rest);
        skin_stretch_generic(self.canonical, self.weights, &posed, &rest, self.bone_scales, &endpoint)
    }

    pub fn joints(&self, root_rot: &Quat<T>, root_trans: &Vec3<T>, joints: &[Quat<T>]) -> Vec<Vec3<T>> {
        fk_generic(self.tree, self.scale, self.bone_scales, joints, root_rot, root_trans)
            .into_iter()
            .map(|b| b.head)
            .collect()
    }
}

fn check_dims(shape: &SkeletalShape, params: &ShapeParams, pose: &FramePose) -> Result<()> {
    let k = shape.num_bones();
    if params.bone_scales.len() != k || pose.joints.len() != k {
        return Err(Error::dim("bone count differs between shape, params and pose"));
    }
    if params.skin_logits.len() != shape.num_vertices() * k {
        return Err(Error::dim("skin logits differ from N×K"));
    }
    Ok(())
}

/// Displaced canonical vertices `u v + V(u v)`.
pub fn canonical_vertices(shape: &SkeletalShape, params: &ShapeParams) -> Vec<Vec3> {
    apply_displacement(&shape.mesh.vertices, &params.displacement, params.scale)
}

/// Full deformation of the template for one frame: displacement, forward
/// kinematics with bone scales, then stretchable skinning.
pub fn deform(shape: &SkeletalShape, params: &ShapeParams, pose: &FramePose) -> Result<Vec<Vec3>> {
    check_dims(shape, params, pose)?;
    let canonical = canonical_vertices(shape, params);
    let weights = params.skin_weights(shape.num_bones());
    Ok(deform_canonical(shape, params, &canonical, &weights, pose))
}

pub(crate) fn deform_canonical(
    shape: &SkeletalShape,
    params: &ShapeParams,
    canonical: &[Vec3],
    weights: &[f64],
    pose: &FramePose,
) -> Vec<Vec3> {
    let art = Articulation {
        tree: &shape.tree,
        canonical,
        weights,
        scale: params.scale,
        bone_scales: &params.bone_scales,
    };
    art.pose(&pose.root.rotation, &pose.root.translation, &pose.joints)
}

/// Clamp region (0 below, 1 inside, 2 above) of every endpoint weight.
pub(crate) fn endpoint_regions(shape: &SkeletalShape, params: &ShapeParams, canonical: &[Vec3]) -> Vec<u8> {
    let k = shape.num_bones();
    let rest = fk_generic(&shape.tree, params.scale, &vec![1.0; k], &vec![Quat::identity(); k], &Quat::identity(), &Vec3::zeros());
    let mut out = Vec::with_capacity(canonical.len() * k);
    for v in canonical {
        for b in &rest {
            let axis = b.tail - b.head;
            let len_sq = axis.norm_sq();
            let e = if len_sq > 0.0 { (*v - b.head).dot(&axis) / len_sq } else { 0.0 };
            out.push(if e <= 0.0 { 0 } else if e >= 1.0 { 2 } else { 1 });
        }
    }
    out
}

/// Posed joint (bone head) positions, consistent with [`deform`].
pub fn posed_joints(shape: &SkeletalShape, params: &ShapeParams, pose: &FramePose) -> Result<Vec<Vec3>> {
    check_dims(shape, params, pose)?;
    let art = Articulation {
        tree: &shape.tree,
        canonical: &[],
        weights: &[],
        scale: params.scale,
        bone_scales: &params.bone_scales,
    };
    Ok(art.joints(&pose.root.rotation, &pose.root.translation, &pose.joints))
}
