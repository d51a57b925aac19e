//! Procedural shapes and scenes for tests, benchmarks and the gradient
//! check.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::math::{Quat, Rigid, Vec3};
use crate::render::Camera;
use crate::skeleton::{
    logits_from_weights, DisplacementField, FramePose, KinematicTree, PoseSequence, ShapeParams, SkeletalShape,
    SkinnedMesh,
};
use crate::workbench::{render_observations, ObservationSequence};

/// Uniformly distributed unit quaternion.
pub fn random_unit_quat<R: Rng>(rng: &mut R) -> Quat {
    loop {
        let q = Quat::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 1e-3 && n <= 1.0 {
            return q.normalized();
        }
    }
}

pub fn random_direction<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

/// Rotation about a random axis by an angle uniform in `[-max_angle, max_angle]`.
pub fn random_rotation<R: Rng>(rng: &mut R, max_angle: f64) -> Quat {
    let axis = random_direction(rng);
    Quat::from_axis_angle(axis, rng.gen_range(-max_angle..=max_angle))
}

/// Random tree with `bones` bones, random parents and rest rotations.
pub fn random_tree<R: Rng>(rng: &mut R, bones: usize) -> KinematicTree {
    let parents: Vec<Option<usize>> = (0..bones).map(|k| if k == 0 { None } else { Some(rng.gen_range(0..k)) }).collect();
    let offsets: Vec<f64> = (0..bones).map(|k| if k == 0 { 0.0 } else { rng.gen_range(0.2..1.0) }).collect();
    let rests: Vec<Quat> = (0..bones).map(|_| random_unit_quat(rng)).collect();
    KinematicTree::with_default_segments(&parents, &offsets, Some(&rests), Some(rng.gen_range(0.2..1.0)))
        .expect("random tree is valid by construction")
}

/// Closed tube along +z driven by a chain of `bones` equal bones. The
/// cross-section is a circle sampled symmetrically about the x = 0 plane,
/// so the rest mesh is exactly mirror symmetric. Weights blend smoothly
/// along z.
pub fn tube_creature(bones: usize, length: f64, radius: f64, rings: usize, sides: usize) -> Result<SkeletalShape> {
    assert!(bones >= 1 && rings >= 2 && sides >= 4 && sides % 2 == 0);
    let seg = length / bones as f64;
    let parents: Vec<Option<usize>> = (0..bones).map(|k| k.checked_sub(1)).collect();
    let offsets: Vec<f64> = (0..bones).map(|k| if k == 0 { 0.0 } else { seg }).collect();
    let tree = KinematicTree::with_default_segments(&parents, &offsets, None, Some(seg))?;

    // unit circle with exact mirror pairs θ ↔ π − θ
    let mut circle: Vec<(f64, f64)> = (0..sides)
        .map(|j| {
            let th = std::f64::consts::TAU * j as f64 / sides as f64;
            (th.cos(), th.sin())
        })
        .collect();
    for j in 0..sides {
        let partner = (sides / 2 + sides - j) % sides;
        if partner == j {
            circle[j].0 = 0.0;
        } else if j < partner {
            circle[partner] = (-circle[j].0, circle[j].1);
        }
    }

    let mut vertices = Vec::with_capacity(rings * sides + 2);
    for r in 0..rings {
        let z = length * r as f64 / (rings - 1) as f64;
        let rho = radius * (0.75 + 0.25 * (std::f64::consts::PI * z / length).sin());
        for (c, s) in &circle {
            vertices.push(Vec3::new(rho * c, rho * s, z));
        }
    }
    let bottom = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, -0.5 * radius));
    let top = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, length + 0.5 * radius));

    let mut faces = Vec::new();
    let at = |r: usize, j: usize| r * sides + j % sides;
    for r in 0..rings - 1 {
        for j in 0..sides {
            faces.push([at(r, j), at(r, j + 1), at(r + 1, j + 1)]);
            faces.push([at(r, j), at(r + 1, j + 1), at(r + 1, j)]);
        }
    }
    for j in 0..sides {
        faces.push([bottom, at(0, j + 1), at(0, j)]);
        faces.push([top, at(rings - 1, j), at(rings - 1, j + 1)]);
    }

    let width = 0.5 * seg;
    let mut skinning = Vec::with_capacity(vertices.len() * bones);
    for v in &vertices {
        let raw: Vec<f64> = (0..bones)
            .map(|k| {
                let c = (k as f64 + 0.5) * seg;
                (-((v.z - c) / width).powi(2)).exp().max(1e-12)
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        skinning.extend(raw.iter().map(|w| w / sum));
    }
    let mesh = SkinnedMesh::new(vertices, faces, skinning, bones)?;
    SkeletalShape::new(tree, mesh)
}

/// Places a +z tube of the given length across the image: rotated a
/// quarter turn about y and pushed `distance` along the optical axis.
pub fn side_view(length: f64, distance: f64) -> Rigid {
    Rigid::new(
        Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), std::f64::consts::FRAC_PI_2),
        Vec3::new(-0.5 * length, 0.0, distance),
    )
}

/// Joint motion ramping linearly from rest to `targets` over `frames`
/// frames, with a fixed root.
pub fn ramp_poses(root: Rigid, targets: &[Quat], frames: usize) -> PoseSequence {
    let k = targets.len();
    let frames = (0..frames)
        .map(|t| {
            let a = if frames > 1 { t as f64 / (frames - 1) as f64 } else { 1.0 };
            let joints = targets.iter().map(|q| slerp_from_identity(q, a)).collect();
            FramePose { root, joints }
        })
        .collect();
    PoseSequence::new(frames, k).expect("ramp poses are unit quaternions")
}

fn slerp_from_identity(q: &Quat, a: f64) -> Quat {
    let q = if q.w < 0.0 { Quat::new(-q.x, -q.y, -q.z, -q.w) } else { *q };
    let angle = 2.0 * q.w.clamp(-1.0, 1.0).acos();
    let s = (1.0 - q.w * q.w).max(0.0).sqrt();
    if s < 1e-12 {
        return Quat::identity();
    }
    Quat::from_axis_angle(Vec3::new(q.x / s, q.y / s, q.z / s), angle * a)
}

/// Ellipsoid tessellated as a UV sphere; convex for any radii.
pub fn ellipsoid(center: Vec3, radii: Vec3, rotation: Quat, stacks: usize, slices: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut v = vec![center + rotation.rotate(Vec3::new(0.0, 0.0, radii.z))];
    for s in 1..stacks {
        let phi = std::f64::consts::PI * s as f64 / stacks as f64;
        for l in 0..slices {
            let th = std::f64::consts::TAU * l as f64 / slices as f64;
            let p = Vec3::new(radii.x * phi.sin() * th.cos(), radii.y * phi.sin() * th.sin(), radii.z * phi.cos());
            v.push(center + rotation.rotate(p));
        }
    }
    let south = v.len();
    v.push(center + rotation.rotate(Vec3::new(0.0, 0.0, -radii.z)));
    let ring = |s: usize, l: usize| 1 + (s - 1) * slices + l % slices;
    let mut f = Vec::new();
    for l in 0..slices {
        f.push([0, ring(1, l), ring(1, l + 1)]);
        f.push([south, ring(stacks - 1, l + 1), ring(stacks - 1, l)]);
    }
    for s in 1..stacks - 1 {
        for l in 0..slices {
            f.push([ring(s, l), ring(s + 1, l), ring(s + 1, l + 1)]);
            f.push([ring(s, l), ring(s + 1, l + 1), ring(s, l + 1)]);
        }
    }
    (v, f)
}

/// Random convex mesh placed in front of a camera at the origin.
pub fn random_convex_mesh<R: Rng>(rng: &mut R) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let center = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(3.0..4.0));
    let radii = Vec3::new(rng.gen_range(0.3..0.9), rng.gen_range(0.3..0.9), rng.gen_range(0.3..0.9));
    ellipsoid(center, radii, random_unit_quat(rng), rng.gen_range(5..10), rng.gen_range(6..14))
}

/// Ground truth and observations for a round-trip fit.
#[derive(Debug, Clone)]
pub struct FitScene {
    pub shape: SkeletalShape,
    pub params: ShapeParams,
    pub poses: PoseSequence,
    pub obs: ObservationSequence,
}

/// A five-bone, 274-vertex tube seen from the side at 64×64 over 8 frames,
/// bending smoothly by at most `max_angle` per joint.
pub fn fit_scene(seed: u64, max_angle: f64) -> Result<FitScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = 1.6;
    let shape = tube_creature(5, length, 0.22, 17, 16)?;
    let params = ShapeParams::identity(&shape, crate::skeleton::DEFAULT_HIDDEN_WIDTH);
    let targets: Vec<Quat> = (0..5)
        .map(|k| {
            if k == 0 {
                Quat::identity()
            } else {
                let a = rng.gen_range(0.5 * max_angle..=max_angle) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), a)
            }
        })
        .collect();
    let poses = ramp_poses(side_view(length, 4.0), &targets, 8);
    let camera = Camera::centered(110.0, 64, 64)?;
    let obs = render_observations(&shape, &params, &poses, &camera)?;
    Ok(FitScene { shape, params, poses, obs })
}

/// Small randomized scene for finite-difference checks: ≤ 50 vertices,
/// ≤ 4 bones, 16×16 images, three frames. Observations come from a
/// perturbed state so every residual is nonzero.
#[derive(Debug, Clone)]
pub struct GradScene {
    pub shape: SkeletalShape,
    pub params: ShapeParams,
    pub poses: PoseSequence,
    pub obs: ObservationSequence,
}

pub fn grad_scene(seed: u64) -> Result<GradScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bones = rng.gen_range(2..=4);
    let length = 1.2;
    // six rings keep every ring off the joints for 2 to 4 bones
    let shape = tube_creature(bones, length, 0.3, 6, 8)?;
    let n = shape.num_vertices();
    let width = 8;
    let mut field = DisplacementField::init(width, &mut rng);
    let last = field.layers.len() - 1;
    let out = &mut field.layers[last];
    for w in out.weights.iter_mut().chain(out.biases.iter_mut()) {
        *w = rng.gen_range(-0.05..0.05);
    }
    let logits: Vec<f64> =
        logits_from_weights(&shape.mesh.skinning).iter().map(|l| l.max(-6.0) + rng.gen_range(-0.3..0.3)).collect();
    let params = ShapeParams {
        scale: rng.gen_range(0.9..1.1),
        bone_scales: (0..bones).map(|_| rng.gen_range(0.8..1.2)).collect(),
        displacement: field,
        skin_logits: logits,
    };
    debug_assert_eq!(params.skin_logits.len(), n * bones);
    let frames = 3;
    let base = side_view(length, 3.5);
    let mut pose_frames = Vec::with_capacity(frames);
    for _ in 0..frames {
        let jitter = Rigid::new(random_rotation(&mut rng, 0.15), Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), 0.0));
        let joints = (0..bones).map(|_| random_rotation(&mut rng, 0.4)).collect();
        pose_frames.push(FramePose { root: jitter.compose(&base), joints });
    }
    let poses = PoseSequence::new(pose_frames, bones)?;
    let mut truth = poses.clone();
    for f in &mut truth.frames {
        for q in &mut f.joints {
            *q = random_rotation(&mut rng, 0.2).mul(q);
        }
        f.root.translation += Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), 0.0);
    }
    let truth_params = ShapeParams { scale: params.scale * 1.05, ..params.clone() };
    let camera = Camera::centered(18.0, 16, 16)?;
    let obs = render_observations(&shape, &truth_params, &truth, &camera)?;
    Ok(GradScene { shape, params, poses, obs })
}
