//! Exact gradients of the total energy.
//!
//! Rendering, the silhouette and flow residuals, Chamfer and the field are
//! differentiated by hand. Everything between the canonical vertices and
//! the posed vertices (kinematics, endpoint weights, stretch skinning) runs
//! on a per-frame reverse-mode tape seeded with the render adjoints.

use rayon::prelude::*;

use super::{VarBlocks, VarClass};
use crate::autodiff::{Tape, Var};
use crate::energy::{
    e_smooth, e_symm, e_symm_grad, flow_energy, flow_energy_grad, mask_residual, mask_residual_grad,
    relative_rotation_penalty, EnergyBreakdown, EnergyWeights,
};
use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::render::{rasterize_soft, rasterize_soft_backward, render_flow, render_flow_backward};
use crate::skeleton::{deform_canonical, Articulation, FramePose, PoseSequence, ShapeParams, SkeletalShape};
use crate::workbench::ObservationSequence;

/// Which variable classes need gradients; the rest are treated as constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassSet(u8);

impl ClassSet {
    pub const ALL: ClassSet = ClassSet(0b11_1111);
    pub const NONE: ClassSet = ClassSet(0);

    pub fn only(c: VarClass) -> Self {
        ClassSet(1 << c.index())
    }

    pub fn with(self, c: VarClass) -> Self {
        ClassSet(self.0 | 1 << c.index())
    }

    pub fn without(self, c: VarClass) -> Self {
        ClassSet(self.0 & !(1 << c.index()))
    }

    pub fn contains(self, c: VarClass) -> bool {
        self.0 & (1 << c.index()) != 0
    }
}

struct FrameGrad {
    canonical: Vec<Vec3>,
    weights: Vec<f64>,
    scale: f64,
    bone_scales: Vec<f64>,
    root: [f64; 7],
    joints: Vec<f64>,
}

fn lift<'t>(tape: &'t Tape, on: bool, v: f64) -> Var<'t> {
    if on {
        tape.var(v)
    } else {
        Var::constant(v)
    }
}

/// Pulls posed-vertex adjoints of one frame back to its inputs.
fn frame_backward(
    shape: &SkeletalShape,
    params: &ShapeParams,
    canonical: &[Vec3],
    weights: &[f64],
    pose: &FramePose,
    gx: &[Vec3],
    classes: ClassSet,
) -> FrameGrad {
    let k = shape.num_bones();
    let n = canonical.len();
    let tape = Tape::with_capacity(n * k * 64);
    let canon_on = classes.contains(VarClass::Scale) || classes.contains(VarClass::Field);
    let weights_on = classes.contains(VarClass::SkinLogits);
    let root_on = classes.contains(VarClass::Root);
    let joints_on = classes.contains(VarClass::Joints);
    let cv: Vec<Vec3<Var>> = canonical
        .iter()
        .map(|v| Vec3::new(lift(&tape, canon_on, v.x), lift(&tape, canon_on, v.y), lift(&tape, canon_on, v.z)))
        .collect();
    let wv: Vec<Var> = weights.iter().map(|w| lift(&tape, weights_on, *w)).collect();
    let u = lift(&tape, classes.contains(VarClass::Scale), params.scale);
    let bs: Vec<Var> = params.bone_scales.iter().map(|b| lift(&tape, classes.contains(VarClass::BoneScales), *b)).collect();
    let r = pose.root.rotation;
    let t = pose.root.translation;
    let rr = Quat::new(lift(&tape, root_on, r.x), lift(&tape, root_on, r.y), lift(&tape, root_on, r.z), lift(&tape, root_on, r.w));
    let rt = Vec3::new(lift(&tape, root_on, t.x), lift(&tape, root_on, t.y), lift(&tape, root_on, t.z));
    let js: Vec<Quat<Var>> = pose
        .joints
        .iter()
        .map(|q| {
            Quat::new(lift(&tape, joints_on, q.x), lift(&tape, joints_on, q.y), lift(&tape, joints_on, q.z), lift(&tape, joints_on, q.w))
        })
        .collect();
    let art = Articulation { tree: &shape.tree, canonical: &cv, weights: &wv, scale: u, bone_scales: &bs };
    let out = art.pose(&rr, &rt, &js);
    let mut seeds = Vec::with_capacity(3 * n);
    for (o, g) in out.iter().zip(gx) {
        seeds.extend([(o.x, g.x), (o.y, g.y), (o.z, g.z)]);
    }
    let adj = tape.backward(&seeds);
    FrameGrad {
        canonical: cv.iter().map(|v| Vec3::new(adj.of(&v.x), adj.of(&v.y), adj.of(&v.z))).collect(),
        weights: wv.iter().map(|w| adj.of(w)).collect(),
        scale: adj.of(&u),
        bone_scales: bs.iter().map(|b| adj.of(b)).collect(),
        root: [adj.of(&rr.x), adj.of(&rr.y), adj.of(&rr.z), adj.of(&rr.w), adj.of(&rt.x), adj.of(&rt.y), adj.of(&rt.z)],
        joints: js.iter().flat_map(|q| [adj.of(&q.x), adj.of(&q.y), adj.of(&q.z), adj.of(&q.w)]).collect(),
    }
}

fn check_finite(b: &EnergyBreakdown) -> Result<()> {
    match b.non_finite_term() {
        Some(term) => Err(Error::NonFinite(format!("energy term `{term}`"))),
        None => Ok(()),
    }
}

/// Energy terms (weighted by `weights`) and the gradient of the weighted
/// total with respect to every variable class in `classes`. Blocks of
/// classes outside `classes` are zero.
pub fn gradients(
    shape: &SkeletalShape,
    params: &ShapeParams,
    poses: &PoseSequence,
    obs: &ObservationSequence,
    weights: &EnergyWeights,
    sigma: f64,
    classes: ClassSet,
) -> Result<(EnergyBreakdown, VarBlocks)> {
    let k = shape.num_bones();
    let n = shape.num_vertices();
    if poses.len() != obs.len() {
        return Err(Error::dim(format!("{} poses for {} observed frames", poses.len(), obs.len())));
    }
    params.validate(shape)?;
    if let Some(t) = poses.frames.iter().position(|f| f.joints.len() != k) {
        return Err(Error::dim(format!("frame {t} has the wrong joint count")));
    }
    let faces = &shape.mesh.faces;
    let cam = &obs.camera;
    let points: Vec<Vec3> = shape.mesh.vertices.iter().map(|v| *v * params.scale).collect();
    let canonical: Vec<Vec3> = points.iter().map(|p| *p + params.displacement.eval(*p)).collect();
    let skin = params.skin_weights(k);
    let frames: Vec<Vec<Vec3>> =
        poses.frames.par_iter().map(|f| deform_canonical(shape, params, &canonical, &skin, f)).collect();

    // silhouettes
    let mask_parts: Vec<(f64, Vec<Vec3>)> = frames
        .par_iter()
        .zip(&obs.masks)
        .map(|(v, observed)| {
            let soft = rasterize_soft(v, faces, cam, sigma);
            let value = mask_residual(&soft, observed)?;
            let g = if weights.w_mask != 0.0 {
                let gs: Vec<f64> = mask_residual_grad(&soft, observed).into_iter().map(|g| g * weights.w_mask).collect();
                rasterize_soft_backward(v, faces, cam, sigma, &gs)
            } else {
                vec![Vec3::zeros(); n]
            };
            Ok((value, g))
        })
        .collect::<Result<_>>()?;

    // flows
    let flow_parts: Vec<(f64, Vec<Vec3>, Vec<Vec3>)> = (0..obs.flows.len())
        .into_par_iter()
        .map(|t| {
            let rendered = render_flow(&frames[t], &frames[t + 1], faces, cam)?;
            let value = flow_energy(&rendered, &obs.flows[t])?;
            if weights.w_flow != 0.0 {
                let gf: Vec<[f64; 2]> = flow_energy_grad(&rendered, &obs.flows[t])
                    .into_iter()
                    .map(|g| [g[0] * weights.w_flow, g[1] * weights.w_flow])
                    .collect();
                let (g0, g1) = render_flow_backward(&frames[t], &frames[t + 1], faces, cam, &gf)?;
                Ok((value, g0, g1))
            } else {
                Ok((value, vec![Vec3::zeros(); n], vec![Vec3::zeros(); n]))
            }
        })
        .collect::<Result<_>>()?;

    let mask: f64 = mask_parts.iter().map(|p| p.0).sum();
    let flow: f64 = flow_parts.iter().map(|p| p.0).sum();
    let smooth = e_smooth(poses);
    let symm_needed = weights.w_symm != 0.0 && (classes.contains(VarClass::Scale) || classes.contains(VarClass::Field));
    let (symm, symm_grad) = if symm_needed {
        let (v, g) = e_symm_grad(&canonical, weights.normal())?;
        (v, Some(g))
    } else {
        (e_symm(&canonical, weights.normal())?, None)
    };
    let breakdown = EnergyBreakdown::from_terms(mask, flow, smooth, symm, weights);
    check_finite(&breakdown)?;

    let mut grads = VarBlocks::pack(params, poses).zeros_like();

    // posed-vertex adjoints per frame
    let mut gx: Vec<Vec<Vec3>> = mask_parts.into_iter().map(|p| p.1).collect();
    for (t, (_, g0, g1)) in flow_parts.into_iter().enumerate() {
        for (a, b) in gx[t].iter_mut().zip(g0) {
            *a += b;
        }
        for (a, b) in gx[t + 1].iter_mut().zip(g1) {
            *a += b;
        }
    }
    let tape_needed = classes != ClassSet::NONE;
    let per_frame: Vec<Option<FrameGrad>> = if tape_needed {
        poses
            .frames
            .par_iter()
            .zip(&gx)
            .map(|(pose, g)| {
                if g.iter().all(|v| v.x == 0.0 && v.y == 0.0 && v.z == 0.0) {
                    None
                } else {
                    Some(frame_backward(shape, params, &canonical, &skin, pose, g, classes))
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut g_canon = vec![Vec3::zeros(); n];
    let mut g_skin = vec![0.0; n * k];
    let mut g_scale = 0.0;
    for (t, fg) in per_frame.iter().enumerate() {
        let Some(fg) = fg else { continue };
        for (a, b) in g_canon.iter_mut().zip(&fg.canonical) {
            *a += *b;
        }
        for (a, b) in g_skin.iter_mut().zip(&fg.weights) {
            *a += b;
        }
        g_scale += fg.scale;
        for (a, b) in grads.get_mut(VarClass::BoneScales).iter_mut().zip(&fg.bone_scales) {
            *a += b;
        }
        grads.get_mut(VarClass::Root)[7 * t..7 * t + 7].copy_from_slice(&fg.root);
        grads.get_mut(VarClass::Joints)[4 * k * t..4 * k * (t + 1)].copy_from_slice(&fg.joints);
    }
    if let Some(g) = symm_grad {
        for (a, b) in g_canon.iter_mut().zip(g) {
            *a += b * weights.w_symm;
        }
    }

    // canonical = p + field(p), p = u v
    if classes.contains(VarClass::Scale) || classes.contains(VarClass::Field) {
        let (g_points, g_field) = params.displacement.backward(&points, &g_canon);
        if classes.contains(VarClass::Field) {
            *grads.get_mut(VarClass::Field) = g_field;
        }
        if classes.contains(VarClass::Scale) {
            for ((v, gc), gp) in shape.mesh.vertices.iter().zip(&g_canon).zip(&g_points) {
                g_scale += (*gc + *gp).dot(v);
            }
        }
    }
    if classes.contains(VarClass::Scale) {
        grads.get_mut(VarClass::Scale)[0] = g_scale;
    }

    // row-wise softmax
    if classes.contains(VarClass::SkinLogits) {
        let gl = grads.get_mut(VarClass::SkinLogits);
        for ((gl_row, w_row), gw_row) in gl.chunks_mut(k).zip(skin.chunks(k)).zip(g_skin.chunks(k)) {
            let s: f64 = w_row.iter().zip(gw_row).map(|(w, g)| w * g).sum();
            for ((o, w), g) in gl_row.iter_mut().zip(w_row).zip(gw_row) {
                *o = w * (g - s);
            }
        }
    }

    if weights.w_smooth != 0.0 && classes.contains(VarClass::Joints) {
        let gj = grads.get_mut(VarClass::Joints);
        for t in 0..poses.len().saturating_sub(1) {
            for b in 0..k {
                let tape = Tape::new();
                let lift_q = |q: &Quat| Quat::new(tape.var(q.x), tape.var(q.y), tape.var(q.z), tape.var(q.w));
                let qa = lift_q(&poses.frames[t].joints[b]);
                let qb = lift_q(&poses.frames[t + 1].joints[b]);
                let p = relative_rotation_penalty(&qa, &qb);
                let adj = tape.backward(&[(p, weights.w_smooth)]);
                let (ia, ib) = (4 * (k * t + b), 4 * (k * (t + 1) + b));
                for (c, (va, vb)) in [(qa.x, qb.x), (qa.y, qb.y), (qa.z, qb.z), (qa.w, qb.w)].iter().enumerate() {
                    gj[ia + c] += adj.of(va);
                    gj[ib + c] += adj.of(vb);
                }
            }
        }
    }

    for c in VarClass::ALL {
        if !classes.contains(c) {
            grads.get_mut(c).iter_mut().for_each(|g| *g = 0.0);
        }
    }
    if let Some((c, i)) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of {}[{i}]", c.name())));
    }
    Ok((breakdown, grads))
}
