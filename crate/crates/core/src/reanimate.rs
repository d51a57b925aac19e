//! Inverse-kinematics retargeting: pose a fitted rig so that its surface
//! matches a target point set.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::energy::{chamfer, chamfer_grad};
use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::optim::{adam_step, AdamParams};
use crate::skeleton::{canonical_vertices, deform, Articulation, FramePose, PoseSequence, ShapeParams, SkeletalShape};

/// Iterations over which the best Chamfer must improve by the relative
/// tolerance before the descent is considered converged.
const PATIENCE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetargetConfig {
    pub max_iters: usize,
    pub rate: f64,
    /// Relative improvement of the best Chamfer below which the descent stops.
    pub tol: f64,
    pub optimize_root: bool,
    pub adam: AdamParams,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        RetargetConfig { max_iters: 500, rate: 1e-2, tol: 1e-6, optimize_root: true, adam: AdamParams::default() }
    }
}

impl RetargetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invariant("max_iters", "must be at least 1"));
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(Error::invariant("rate", "must be positive and finite"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invariant("tol", "must be nonnegative"));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Retarget {
    /// Best pose visited.
    pub pose: FramePose,
    pub chamfer: f64,
    pub initial_chamfer: f64,
    /// Gradient steps taken.
    pub iterations: usize,
    /// Set when a non-finite value stopped the descent.
    pub diverged: bool,
}

fn pack(pose: &FramePose) -> Vec<f64> {
    let r = pose.root.rotation;
    let t = pose.root.translation;
    let mut x = vec![r.x, r.y, r.z, r.w, t.x, t.y, t.z];
    x.extend(pose.joints.iter().flat_map(|q| q.to_array()));
    x
}

fn unpack(x: &[f64]) -> FramePose {
    let mut pose = FramePose::rest((x.len() - 7) / 4);
    pose.root.rotation = Quat::new(x[0], x[1], x[2], x[3]).normalized();
    pose.root.translation = Vec3::new(x[4], x[5], x[6]);
    for (q, c) in pose.joints.iter_mut().zip(x[7..].chunks_exact(4)) {
        *q = Quat::new(c[0], c[1], c[2], c[3]).normalized();
    }
    pose
}

/// Gradient of `chamfer(deform(pose), target)` with respect to the packed pose.
fn pose_gradient(
    shape: &SkeletalShape,
    params: &ShapeParams,
    canonical: &[Vec3],
    weights: &[f64],
    x: &[f64],
    target: &[Vec3],
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let v: Vec<_> = x.iter().map(|&c| tape.var(c)).collect();
    let cv: Vec<Vec3<_>> = canonical.iter().map(|p| Vec3::from_f64(*p)).collect();
    let wv: Vec<_> = weights.iter().map(|&w| Var::constant(w)).collect();
    let bs: Vec<_> = params.bone_scales.iter().map(|&b| Var::constant(b)).collect();
    let art = Articulation {
        tree: &shape.tree,
        canonical: &cv,
        weights: &wv,
        scale: Var::constant(params.scale),
        bone_scales: &bs,
    };
    let joints: Vec<Quat<_>> = v[7..].chunks_exact(4).map(|c| Quat::new(c[0], c[1], c[2], c[3])).collect();
    let out = art.pose(&Quat::new(v[0], v[1], v[2], v[3]), &Vec3::new(v[4], v[5], v[6]), &joints);
    let posed: Vec<Vec3> = out.iter().map(|p| p.value()).collect();
    let (value, ga, _) = chamfer_grad(&posed, target)?;
    let mut seeds = Vec::with_capacity(3 * out.len());
    for (o, g) in out.iter().zip(&ga) {
        seeds.extend([(o.x, g.x), (o.y, g.y), (o.z, g.z)]);
    }
    let adj = tape.backward(&seeds);
    Ok((value, v.iter().map(|c| adj.of(c)).collect()))
}

/// Adam descent on the joint rotations (and the root when enabled) with
/// the shape frozen. Returns the best pose visited, so the final Chamfer
/// never exceeds the initial one.
pub fn retarget(
    shape: &SkeletalShape,
    params: &ShapeParams,
    target: &[Vec3],
    initial: &FramePose,
    config: &RetargetConfig,
) -> Result<Retarget> {
    config.validate()?;
    params.validate(shape)?;
    if target.is_empty() {
        return Err(Error::invalid("retarget target has no points"));
    }
    if initial.joints.len() != shape.num_bones() {
        return Err(Error::dim(format!("initial pose has {} joints, shape has {} bones", initial.joints.len(), shape.num_bones())));
    }
    let canonical = canonical_vertices(shape, params);
    let weights = params.skin_weights(shape.num_bones());
    let mut x = pack(initial);
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    let mut best = (f64::INFINITY, initial.clone());
    let mut initial_chamfer = None;
    let mut checkpoint = None;
    let mut iterations = 0;
    let mut diverged = false;
    for it in 0..=config.max_iters {
        let (value, mut g) = pose_gradient(shape, params, &canonical, &weights, &x, target)?;
        if !value.is_finite() || g.iter().any(|c| !c.is_finite()) {
            diverged = true;
            break;
        }
        initial_chamfer.get_or_insert(value);
        let checkpoint = checkpoint.get_or_insert((value, it));
        if value < best.0 {
            best = (value, unpack(&x));
        }
        if it == config.max_iters || best.0 == 0.0 {
            break;
        }
        if it - checkpoint.1 >= PATIENCE {
            if checkpoint.0 - best.0 <= config.tol * checkpoint.0 {
                break;
            }
            *checkpoint = (best.0, it);
        }
        if !config.optimize_root {
            g[..7].iter_mut().for_each(|c| *c = 0.0);
        }
        iterations += 1;
        adam_step(&mut x, &g, &mut m, &mut v, config.rate, &config.adam, iterations as u64)?;
        x = pack(&unpack(&x));
    }
    let initial_chamfer = match initial_chamfer {
        Some(c) => c,
        None => return Err(Error::NonFinite("retarget energy at the initial pose".into())),
    };
    Ok(Retarget { pose: best.1, chamfer: best.0, initial_chamfer, iterations, diverged })
}

/// Chamfer between the posed rig and `target`.
pub fn pose_chamfer(shape: &SkeletalShape, params: &ShapeParams, pose: &FramePose, target: &[Vec3]) -> Result<f64> {
    chamfer(&deform(shape, params, pose)?, target)
}

/// Deformed vertices of every frame.
pub fn pose_playback(shape: &SkeletalShape, params: &ShapeParams, poses: &PoseSequence) -> Result<Vec<Vec<Vec3>>> {
    poses.frames.iter().map(|f| deform(shape, params, f)).collect()
}
