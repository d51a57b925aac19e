use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Quat, Real, Rigid, Vec3};

pub(crate) const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bone {
    pub parent: Option<usize>,
    /// Translation from the parent joint along the parent's local z axis.
    pub offset_length: f64,
    /// Distance from this bone's joint to its distal endpoint.
    pub segment_length: f64,
    pub rest_rotation: Quat,
}

/// Bones in topological order: every parent index is smaller than its child's.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    bones: Vec<Bone>,
}

impl KinematicTree {
    pub fn new(bones: Vec<Bone>) -> Result<Self> {
        if bones.is_empty() {
            return Err(Error::invariant("bones", "tree has no bones"));
        }
        let mut roots = 0;
        for (k, b) in bones.iter().enumerate() {
            match b.parent {
                None => {
                    roots += 1;
                    if b.offset_length != 0.0 {
                        return Err(Error::invariant(
                            format!("bones[{k}].offset_length"),
                            "root offset must be 0",
                        ));
                    }
                }
                Some(p) => {
                    if p >= k {
                        return Err(Error::invariant(
                            format!("bones[{k}].parent"),
                            format!("parent {p} is not before child {k} (cycle or bad ordering)"),
                        ));
                    }
                    if !(b.offset_length > 0.0) || !b.offset_length.is_finite() {
                        return Err(Error::invariant(
                            format!("bones[{k}].offset_length"),
                            "non-root offset must be a positive finite number",
                        ));
                    }
                }
            }
            if !(b.segment_length >= 0.0) || !b.segment_length.is_finite() {
                return Err(Error::invariant(format!("bones[{k}].segment_length"), "must be ≥ 0"));
            }
            if (b.rest_rotation.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::invariant(format!("bones[{k}].rest_rotation"), "not unit norm"));
            }
        }
        if roots != 1 {
            return Err(Error::invariant("bones", format!("expected exactly one root, found {roots}")));
        }
        if bones[0].parent.is_some() {
            return Err(Error::invariant("bones[0].parent", "root must be the first bone"));
        }
        Ok(KinematicTree { bones })
    }

    /// Builds a tree whose segment lengths follow the import rule: the
    /// distance to the first child joint, or `tip_length` (default: the
    /// bone's own offset) for leaves.
    pub fn with_default_segments(
        parents: &[Option<usize>],
        offsets: &[f64],
        rest_rotations: Option<&[Quat]>,
        tip_length: Option<f64>,
    ) -> Result<Self> {
        if parents.len() != offsets.len() {
            return Err(Error::dim("parents and offsets differ in length"));
        }
        let k = parents.len();
        let mut segments: Vec<Option<f64>> = vec![None; k];
        for c in 0..k {
            if let Some(p) = parents[c] {
                if p < k && segments[p].is_none() {
                    segments[p] = Some(offsets[c]);
                }
            }
        }
        let bones = (0..k)
            .map(|i| Bone {
                parent: parents[i],
                offset_length: offsets[i],
                segment_length: segments[i].unwrap_or(tip_length.unwrap_or(offsets[i])),
                rest_rotation: rest_rotations.map_or(Quat::identity(), |r| r[i]),
            })
            .collect();
        KinematicTree::new(bones)
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn len(&self) -> usize {
        self.bones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bones.is_empty()
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        self.bones.iter().map(|b| b.parent).collect()
    }

    /// Ancestors of bone `k` from the root down to and including `k`.
    pub fn chain(&self, k: usize) -> Vec<usize> {
        let mut out = vec![k];
        let mut cur = k;
        while let Some(p) = self.bones[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoneTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub head: Vec3,
    pub tail: Vec3,
}

impl BoneTransform {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(&p) + self.translation
    }

    pub fn from_rigid(r: &Rigid) -> Self {
        BoneTransform {
            rotation: r.rotation.normalized().to_mat3(),
            translation: r.translation,
            head: r.translation,
            tail: r.translation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoneTransforms(pub Vec<BoneTransform>);

impl BoneTransforms {
    pub fn heads(&self) -> Vec<Vec3> {
        self.0.iter().map(|b| b.head).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Skinning transforms mapping rest-pose space into this pose:
    /// `x ↦ c_k + R_k R_rest_kᵀ (x − c_rest_k)`.
    pub fn relative_to(&self, rest: &BoneTransforms) -> BoneTransforms {
        BoneTransforms(
            self.0
                .iter()
                .zip(&rest.0)
                .map(|(p, r)| {
                    let rot = p.rotation.mul_mat(&r.rotation.transpose());
                    BoneTransform {
                        rotation: rot,
                        translation: p.head - rot.mul_vec(&r.head),
                        head: p.head,
                        tail: p.tail,
                    }
                })
                .collect(),
        )
    }
}

/// Per-bone world pose over a generic scalar.
#[derive(Clone, Copy)]
pub(crate) struct BonePose<T> {
    pub rot: Mat3<T>,
    pub head: Vec3<T>,
    pub tail: Vec3<T>,
}

/// Forward kinematics with raw (unnormalized) quaternions, normalized on use.
/// `length_scale` multiplies every offset and segment length.
pub(crate) fn fk_generic<T: Real>(
    tree: &KinematicTree,
    length_scale: T,
    bone_scales: &[T],
    joints: &[Quat<T>],
    root_rot: &Quat<T>,
    root_trans: &Vec3<T>,
) -> Vec<BonePose<T>> {
    let root_r = root_rot.normalized().to_mat3();
    let mut out: Vec<BonePose<T>> = Vec::with_capacity(tree.len());
    for (k, bone) in tree.bones.iter().enumerate() {
        let local = Mat3::from_f64(&bone.rest_rotation.to_mat3()).mul_mat(&joints[k].normalized().to_mat3());
        let (parent_rot, parent_pos) = match bone.parent {
            Some(p) => (out[p].rot, out[p].head),
            None => (root_r, *root_trans),
        };
        let offset = bone_scales[k] * length_scale * bone.offset_length;
        let head = parent_pos + parent_rot.column(2).scale(offset);
        let rot = parent_rot.mul_mat(&local);
        let seg = bone_scales[k] * length_scale * bone.segment_length;
        let tail = head + rot.column(2).scale(seg);
        out.push(BonePose { rot, head, tail });
    }
    out
}

pub(crate) fn check_unit(q: &Quat, what: &str) -> Result<()> {
    if (q.norm() - 1.0).abs() > UNIT_TOL || !q.norm().is_finite() {
        return Err(Error::invalid(format!("{what} is not a unit quaternion (norm {})", q.norm())));
    }
    Ok(())
}

/// World transforms of every bone: each relative transform maps
/// `x ↦ (s_k b_k) e_z + R(rest_k) R(q_k) x`, chained from the root.
pub fn forward_kinematics(
    tree: &KinematicTree,
    bone_scales: &[f64],
    joints: &[Quat],
    root: &Rigid,
) -> Result<BoneTransforms> {
    if bone_scales.len() != tree.len() || joints.len() != tree.len() {
        return Err(Error::dim(format!(
            "tree has {} bones but got {} scales and {} joints",
            tree.len(),
            bone_scales.len(),
            joints.len()
        )));
    }
    for (k, q) in joints.iter().enumerate() {
        check_unit(q, &format!("joint {k}"))?;
    }
    check_unit(&root.rotation, "root rotation")?;
    let poses = fk_generic(tree, 1.0, bone_scales, joints, &root.rotation, &root.translation);
    Ok(BoneTransforms(
        poses
            .into_iter()
            .map(|p| BoneTransform { rotation: p.rot, translation: p.head, head: p.head, tail: p.tail })
            .collect(),
    ))
}

/// Bone transforms at the canonical pose (identity joints, unit scales, identity root).
pub fn rest_transforms(tree: &KinematicTree) -> BoneTransforms {
    let k = tree.len();
    forward_kinematics(tree, &vec![1.0; k], &vec![Quat::identity(); k], &Rigid::identity())
        .expect("rest pose inputs are valid by construction")
}
