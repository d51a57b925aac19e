use crate::error::{Error, Result};
use crate::math::{Mat3, Real, Vec3};

use super::mesh::SkinnedMesh;
use super::tree::{BonePose, BoneTransforms};

/// Fraction of the way along each bone's rest segment where a vertex
/// projects, clamped to `[0, 1]`. Row-major `N×K`.
pub fn endpoint_weights(mesh: &SkinnedMesh, rest: &BoneTransforms) -> Vec<f64> {
    let poses: Vec<BonePose<f64>> =
        rest.0.iter().map(|b| BonePose { rot: b.rotation, head: b.head, tail: b.tail }).collect();
    endpoint_generic(&mesh.vertices, &poses)
}

pub(crate) fn endpoint_generic<T: Real>(vertices: &[Vec3<T>], rest: &[BonePose<T>]) -> Vec<T> {
    let axes: Vec<(Vec3<T>, Option<T>)> = rest
        .iter()
        .map(|b| {
            let axis = b.tail - b.head;
            let len_sq = axis.norm_sq();
            let inv = if len_sq.value() > 0.0 { Some(T::cst(1.0) / len_sq) } else { None };
            (axis, inv)
        })
        .collect();
    let mut out = Vec::with_capacity(vertices.len() * rest.len());
    for v in vertices {
        for (b, (axis, inv)) in rest.iter().zip(&axes) {
            out.push(match inv {
                Some(inv) => ((*v - b.head).dot(axis) * *inv).clamp01(),
                None => T::zero(),
            });
        }
    }
    out
}

/// Classic LBS: `v_i ↦ Σ_k w_ik T_k(v_i)` with the given skinning transforms.
pub fn skin_lbs(mesh: &SkinnedMesh, transforms: &BoneTransforms) -> Result<Vec<Vec3>> {
    let k = mesh.num_bones();
    if transforms.len() != k {
        return Err(Error::dim(format!("{} transforms for {k} bones", transforms.len())));
    }
    Ok(mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            mesh.weights(i)
                .iter()
                .zip(&transforms.0)
                .fold(Vec3::zeros(), |acc, (w, t)| acc + t.apply(*v) * *w)
        })
        .collect())
}

/// Stretchable-bone skinning:
/// `v_i ↦ Σ_k w_ik (c_k' + R_k (e_ik s_k + v_i − c_k))`, with
/// `s_k = (b_k − 1)(d_k − c_k)` from the rest pose and `R_k` the rotation
/// relative to rest.
pub fn skin_stretchable(
    mesh: &SkinnedMesh,
    transforms: &BoneTransforms,
    rest: &BoneTransforms,
    bone_scales: &[f64],
    endpoint: &[f64],
) -> Result<Vec<Vec3>> {
    let k = mesh.num_bones();
    if transforms.len() != k || rest.len() != k || bone_scales.len() != k {
        return Err(Error::dim("transform, rest or bone-scale count differs from bone count"));
    }
    if endpoint.len() != mesh.vertices.len() * k {
        return Err(Error::dim(format!(
            "endpoint matrix has {} entries, expected {}×{k}",
            endpoint.len(),
            mesh.vertices.len()
        )));
    }
    let to_pose = |b: &super::tree::BoneTransform| BonePose { rot: b.rotation, head: b.head, tail: b.tail };
    let posed: Vec<_> = transforms.0.iter().map(to_pose).collect();
    let rest: Vec<_> = rest.0.iter().map(to_pose).collect();
    Ok(skin_stretch_generic(&mesh.vertices, &mesh.skinning, &posed, &rest, bone_scales, endpoint))
}

pub(crate) fn skin_stretch_generic<T: Real>(
    vertices: &[Vec3<T>],
    weights: &[T],
    posed: &[BonePose<T>],
    rest: &[BonePose<T>],
    bone_scales: &[T],
    endpoint: &[T],
) -> Vec<Vec3<T>> {
    let k = posed.len();
    let bones: Vec<(Mat3<T>, Vec3<T>, Vec3<T>, Vec3<T>)> = posed
        .iter()
        .zip(rest)
        .zip(bone_scales)
        .map(|((p, r), s)| {
            let rel = p.rot.mul_mat(&r.rot.transpose());
            let stretch = (r.tail - r.head).scale(*s - 1.0);
            (rel, p.head, r.head, stretch)
        })
        .collect();
    vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = &weights[i * k..(i + 1) * k];
            let e = &endpoint[i * k..(i + 1) * k];
            let mut acc = Vec3::zeros();
            for (j, (rel, head_t, head, stretch)) in bones.iter().enumerate() {
                let local = stretch.scale(e[j]) + (*v - *head);
                acc += (*head_t + rel.mul_vec(&local)).scale(w[j]);
            }
            acc
        })
        .collect()
}
