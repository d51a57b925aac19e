use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Quat, Rigid, Vec3};

use super::tree::{KinematicTree, UNIT_TOL};

const SIMPLEX_TOL: f64 = 1e-6;

/// Rest-pose triangle mesh with row-major `N×K` skinning weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinnedMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub skinning: Vec<f64>,
    bones: usize,
}

impl SkinnedMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, skinning: Vec<f64>, bones: usize) -> Result<Self> {
        let n = vertices.len();
        if bones == 0 {
            return Err(Error::invariant("skinning", "bone count must be ≥ 1"));
        }
        if skinning.len() != n * bones {
            return Err(Error::dim(format!("skinning has {} entries, expected {}×{}", skinning.len(), n, bones)));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::invariant(format!("vertices[{i}]"), "non-finite coordinate"));
            }
        }
        for (j, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::invariant(format!("faces[{j}]"), format!("index out of range [0, {n})")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invariant(format!("faces[{j}]"), "degenerate face"));
            }
        }
        for (i, row) in skinning.chunks(bones).enumerate() {
            if row.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::invariant(format!("skinning[{i}]"), "negative or non-finite weight"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::invariant(format!("skinning[{i}]"), format!("row sums to {s}, expected 1")));
            }
        }
        Ok(SkinnedMesh { vertices, faces, skinning, bones })
    }

    pub fn num_bones(&self) -> usize {
        self.bones
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.skinning[i * self.bones..(i + 1) * self.bones]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletalShape {
    pub tree: KinematicTree,
    pub mesh: SkinnedMesh,
}

impl SkeletalShape {
    pub fn new(tree: KinematicTree, mesh: SkinnedMesh) -> Result<Self> {
        if tree.len() != mesh.num_bones() {
            return Err(Error::dim(format!(
                "tree has {} bones, skinning has {} columns",
                tree.len(),
                mesh.num_bones()
            )));
        }
        Ok(SkeletalShape { tree, mesh })
    }

    pub fn num_bones(&self) -> usize {
        self.tree.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.mesh.vertices.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub root: Rigid,
    pub joints: Vec<Quat>,
}

impl FramePose {
    pub fn rest(bones: usize) -> Self {
        FramePose { root: Rigid::identity(), joints: vec![Quat::identity(); bones] }
    }

    pub fn with_root(root: Rigid, bones: usize) -> Self {
        FramePose { root, joints: vec![Quat::identity(); bones] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub frames: Vec<FramePose>,
}

impl PoseSequence {
    pub fn new(frames: Vec<FramePose>, bones: usize) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invariant("frames", "pose sequence needs at least one frame"));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.joints.len() != bones {
                return Err(Error::invariant(
                    format!("frames[{t}].joints"),
                    format!("{} joints, expected {bones}", f.joints.len()),
                ));
            }
            if (f.root.rotation.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::invariant(format!("frames[{t}].root.rotation"), "not unit norm"));
            }
            for (k, q) in f.joints.iter().enumerate() {
                if (q.norm() - 1.0).abs() > UNIT_TOL {
                    return Err(Error::invariant(format!("frames[{t}].joints[{k}]"), "not unit norm"));
                }
            }
        }
        Ok(PoseSequence { frames })
    }

    pub fn rest(frames: usize, bones: usize) -> Self {
        PoseSequence { frames: vec![FramePose::rest(bones); frames] }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Renormalizes every quaternion in place.
    pub fn normalize(&mut self) {
        for f in &mut self.frames {
            f.root.rotation = f.root.rotation.normalized();
            for q in &mut f.joints {
                *q = q.normalized();
            }
        }
    }
}
