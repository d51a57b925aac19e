#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3};
use rand::Rng;

use skelfit_core::math::{Quat, Rigid, Vec3};
use skelfit_core::skeleton::KinematicTree;
use skelfit_core::synthetic::random_tree;
use skelfit_core::{SkeletalShape, SkinnedMesh};

pub fn na_quat(q: &Quat) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q.w, q.x, q.y, q.z))
}

pub fn homogeneous(rot: Matrix3<f64>, t: Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

/// World matrix of every bone by plain 4×4 composition:
/// `W_k = W_parent · Translate(s_k b_k e_z) · R(rest_k) · R(q_k)`.
pub fn matrix_fk(tree: &KinematicTree, scales: &[f64], joints: &[Quat], root: &Rigid) -> Vec<Matrix4<f64>> {
    let root_m = homogeneous(
        *na_quat(&root.rotation).to_rotation_matrix().matrix(),
        Vector3::new(root.translation.x, root.translation.y, root.translation.z),
    );
    let mut out: Vec<Matrix4<f64>> = Vec::new();
    for (k, b) in tree.bones().iter().enumerate() {
        let parent = b.parent.map_or(root_m, |p| out[p]);
        let offset = homogeneous(Matrix3::identity(), Vector3::new(0.0, 0.0, scales[k] * b.offset_length));
        let local = na_quat(&b.rest_rotation) * na_quat(&joints[k]);
        let rot = homogeneous(*local.to_rotation_matrix().matrix(), Vector3::zeros());
        out.push(parent * offset * rot);
    }
    out
}

pub fn random_weights<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n * k);
    for _ in 0..n {
        let row: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0f64).powi(2) + 1e-3).collect();
        let s: f64 = row.iter().sum();
        w.extend(row.iter().map(|x| x / s));
    }
    w
}

/// Random rig: a random tree, vertices scattered around the bones and
/// random faces.
pub fn random_shape<R: Rng>(rng: &mut R, bones: usize, n: usize) -> SkeletalShape {
    let tree = random_tree(rng, bones);
    let vertices: Vec<Vec3> =
        (0..n).map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.5))).collect();
    let faces: Vec<[usize; 3]> = (0..n)
        .map(|_| loop {
            let f = [rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n)];
            if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                break f;
            }
        })
        .collect();
    let mesh = SkinnedMesh::new(vertices, faces, random_weights(rng, n, bones), bones).unwrap();
    SkeletalShape::new(tree, mesh).unwrap()
}
