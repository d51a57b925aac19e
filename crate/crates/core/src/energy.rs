//! The fitting objective: weighted visual-cue consistency, motion
//! smoothness and canonical-shape symmetry.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Quat, Real, Vec3};
use crate::render::{rasterize_soft, render_flow, FlowMap, SilhouetteMap};
use crate::skeleton::{canonical_vertices, deform_canonical, PoseSequence, ShapeParams, SkeletalShape};
use crate::workbench::ObservationSequence;

/// Default soft-raster sharpness in squared NDC units. Overlapping faces
/// widen the soft silhouette by roughly `sqrt(sigma)`, so this is kept
/// well under a pixel at 64×64.
pub const DEFAULT_SIGMA: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyWeights {
    pub w_mask: f64,
    pub w_flow: f64,
    pub w_smooth: f64,
    pub w_symm: f64,
    pub symmetry_normal: [f64; 3],
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights { w_mask: 1e4, w_flow: 1e6, w_smooth: 1e6, w_symm: 1e4, symmetry_normal: [1.0, 0.0, 0.0] }
    }
}

impl EnergyWeights {
    pub fn zero() -> Self {
        EnergyWeights { w_mask: 0.0, w_flow: 0.0, w_smooth: 0.0, w_symm: 0.0, ..Default::default() }
    }

    /// Only the mask term, at the given weight.
    pub fn mask_only(w: f64) -> Self {
        EnergyWeights { w_mask: w, ..Self::zero() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w_mask", self.w_mask), ("w_flow", self.w_flow), ("w_smooth", self.w_smooth), ("w_symm", self.w_symm)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invariant(format!("weights.{name}"), "must be finite and ≥ 0"));
            }
        }
        let n = Vec3::from_array(self.symmetry_normal).norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::invariant("weights.symmetry_normal", "must have unit length"));
        }
        Ok(())
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::from_array(self.symmetry_normal)
    }
}

/// Term values and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub mask: f64,
    pub flow: f64,
    pub smooth: f64,
    pub symm: f64,
}

impl EnergyBreakdown {
    pub fn from_terms(mask: f64, flow: f64, smooth: f64, symm: f64, w: &EnergyWeights) -> Self {
        let total = w.w_mask * mask + w.w_flow * flow + w.w_smooth * smooth + w.w_symm * symm;
        EnergyBreakdown { total, mask, flow, smooth, symm }
    }

    pub fn is_finite(&self) -> bool {
        [self.total, self.mask, self.flow, self.smooth, self.symm].iter().all(|v| v.is_finite())
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [("mask", self.mask), ("flow", self.flow), ("smooth", self.smooth), ("symm", self.symm), ("total", self.total)]
            .into_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| n)
    }
}

fn nearest(p: &Vec3, set: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, q) in set.iter().enumerate() {
        let d = p.dist_sq(q);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Sum of both directional means of squared nearest-neighbor distances.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance of an empty point set"));
    }
    let ab: f64 = a.par_iter().map(|p| nearest(p, b).1).collect::<Vec<_>>().iter().sum();
    let ba: f64 = b.par_iter().map(|p| nearest(p, a).1).collect::<Vec<_>>().iter().sum();
    Ok(ab / a.len() as f64 + ba / b.len() as f64)
}

/// Chamfer value with gradients with respect to both sets.
pub fn chamfer_grad(a: &[Vec3], b: &[Vec3]) -> Result<(f64, Vec<Vec3>, Vec<Vec3>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance of an empty point set"));
    }
    let mut ga = vec![Vec3::zeros(); a.len()];
    let mut gb = vec![Vec3::zeros(); b.len()];
    let mut value = 0.0;
    for (from, to, swap) in [(a, b, false), (b, a, true)] {
        let inv = 1.0 / from.len() as f64;
        let nn: Vec<(usize, f64)> = from.par_iter().map(|p| nearest(p, to)).collect();
        let (gf, gt) = if swap { (&mut gb, &mut ga) } else { (&mut ga, &mut gb) };
        for (i, (j, d)) in nn.into_iter().enumerate() {
            value += d * inv;
            let r = (from[i] - to[j]) * (2.0 * inv);
            gf[i] += r;
            gt[j] += -r;
        }
    }
    Ok((value, ga, gb))
}

fn check_same_size(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::dim(format!("{what}: {}×{} vs {}×{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

/// Mean squared per-pixel silhouette difference for one frame.
pub fn mask_residual(rendered: &SilhouetteMap, observed: &SilhouetteMap) -> Result<f64> {
    check_same_size((rendered.width, rendered.height), (observed.width, observed.height), "mask size")?;
    let n = rendered.data.len() as f64;
    Ok(rendered.data.iter().zip(&observed.data).map(|(r, o)| (r - o) * (r - o)).sum::<f64>() / n)
}

/// d(mask residual)/d(rendered occupancy) per pixel.
pub fn mask_residual_grad(rendered: &SilhouetteMap, observed: &SilhouetteMap) -> Vec<f64> {
    let n = rendered.data.len() as f64;
    rendered.data.iter().zip(&observed.data).map(|(r, o)| 2.0 * (r - o) / n).collect()
}

/// Mean squared flow difference over pixels valid in both maps (0 if none).
pub fn flow_residual(rendered: &FlowMap, observed: &FlowMap) -> Result<f64> {
    weighted_flow_residual(rendered, observed, [1.0, 1.0])
}

pub fn flow_residual_grad(rendered: &FlowMap, observed: &FlowMap) -> Vec<[f64; 2]> {
    weighted_flow_residual_grad(rendered, observed, [1.0, 1.0])
}

/// `(2/width, 2/height)`: pixels to normalized device units.
pub fn ndc_flow_factors(map: &FlowMap) -> [f64; 2] {
    [2.0 / map.width as f64, 2.0 / map.height as f64]
}

/// [`flow_residual`] with both maps measured in normalized device units,
/// the unit the default flow weight is calibrated for. This is the flow
/// term of [`total_energy`].
pub fn flow_energy(rendered: &FlowMap, observed: &FlowMap) -> Result<f64> {
    weighted_flow_residual(rendered, observed, ndc_flow_factors(rendered))
}

/// d([`flow_energy`])/d(rendered pixel flow).
pub fn flow_energy_grad(rendered: &FlowMap, observed: &FlowMap) -> Vec<[f64; 2]> {
    weighted_flow_residual_grad(rendered, observed, ndc_flow_factors(rendered))
}

fn weighted_flow_residual(rendered: &FlowMap, observed: &FlowMap, s: [f64; 2]) -> Result<f64> {
    check_same_size((rendered.width, rendered.height), (observed.width, observed.height), "flow size")?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in 0..rendered.flow.len() {
        if rendered.valid[p] && observed.valid[p] {
            let du = s[0] * (rendered.flow[p][0] - observed.flow[p][0]);
            let dv = s[1] * (rendered.flow[p][1] - observed.flow[p][1]);
            sum += du * du + dv * dv;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

fn weighted_flow_residual_grad(rendered: &FlowMap, observed: &FlowMap, s: [f64; 2]) -> Vec<[f64; 2]> {
    let count = (0..rendered.flow.len()).filter(|&p| rendered.valid[p] && observed.valid[p]).count();
    let c = 2.0 / count.max(1) as f64;
    (0..rendered.flow.len())
        .map(|p| {
            if rendered.valid[p] && observed.valid[p] {
                [
                    c * s[0] * s[0] * (rendered.flow[p][0] - observed.flow[p][0]),
                    c * s[1] * s[1] * (rendered.flow[p][1] - observed.flow[p][1]),
                ]
            } else {
                [0.0, 0.0]
            }
        })
        .collect()
}

fn check_frames(rm: &[SilhouetteMap], om: &[SilhouetteMap], rf: &[FlowMap], of: &[FlowMap]) -> Result<()> {
    if rm.len() != om.len() || rf.len() != of.len() {
        return Err(Error::dim("rendered and observed frame counts differ"));
    }
    Ok(())
}

/// `(mask term, flow term)` summed over frames, flow in pixels.
pub fn e_cue(
    rendered_masks: &[SilhouetteMap],
    observed_masks: &[SilhouetteMap],
    rendered_flows: &[FlowMap],
    observed_flows: &[FlowMap],
) -> Result<(f64, f64)> {
    check_frames(rendered_masks, observed_masks, rendered_flows, observed_flows)?;
    let mut mask = 0.0;
    for (r, o) in rendered_masks.iter().zip(observed_masks) {
        mask += mask_residual(r, o)?;
    }
    let mut flow = 0.0;
    for (r, o) in rendered_flows.iter().zip(observed_flows) {
        flow += flow_residual(r, o)?;
    }
    Ok((mask, flow))
}

/// `‖canon(a⁻¹ ∘ b) − 1‖²` for raw quaternions, normalized on use; `canon`
/// flips the sign so the scalar part is non-negative.
pub(crate) fn relative_rotation_penalty<T: Real>(a: &Quat<T>, b: &Quat<T>) -> T {
    let r = a.normalized().conjugate().mul(&b.normalized());
    let r = if r.w.value() < 0.0 { Quat::new(-r.x, -r.y, -r.z, -r.w) } else { r };
    let dw = r.w - 1.0;
    r.x * r.x + r.y * r.y + r.z * r.z + dw * dw
}

/// Motion smoothness over consecutive frames; 0 for a single frame.
pub fn e_smooth(pose: &PoseSequence) -> f64 {
    pose.frames
        .windows(2)
        .map(|w| {
            w[0].joints.iter().zip(&w[1].joints).map(|(a, b)| relative_rotation_penalty(a, b)).sum::<f64>()
        })
        .sum()
}

/// `p ↦ (I − 2nnᵀ) p`.
pub fn householder_reflect(points: &[Vec3], normal: Vec3) -> Result<Vec<Vec3>> {
    let n2 = normal.norm_sq();
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::invalid("reflection normal must be non-zero"));
    }
    let n = normal * (1.0 / n2.sqrt());
    Ok(points.iter().map(|p| *p - n * (2.0 * n.dot(p))).collect())
}

/// Chamfer distance between the canonical vertices and their mirror image.
pub fn e_symm(canonical: &[Vec3], normal: Vec3) -> Result<f64> {
    let mirrored = householder_reflect(canonical, normal)?;
    chamfer(canonical, &mirrored)
}

/// Symmetry term and its gradient with respect to the canonical vertices.
pub fn e_symm_grad(canonical: &[Vec3], normal: Vec3) -> Result<(f64, Vec<Vec3>)> {
    let mirrored = householder_reflect(canonical, normal)?;
    let (v, ga, gb) = chamfer_grad(canonical, &mirrored)?;
    // H is symmetric, so Hᵀ g = H g
    let back = householder_reflect(&gb, normal)?;
    Ok((v, ga.iter().zip(&back).map(|(a, b)| *a + *b).collect()))
}

/// Deformed vertices of every frame.
pub fn deform_sequence(shape: &SkeletalShape, params: &ShapeParams, poses: &PoseSequence) -> Result<Vec<Vec<Vec3>>> {
    let k = shape.num_bones();
    if params.bone_scales.len() != k || params.skin_logits.len() != shape.num_vertices() * k {
        return Err(Error::dim("shape parameters do not match the shape"));
    }
    if let Some(t) = poses.frames.iter().position(|f| f.joints.len() != k) {
        return Err(Error::dim(format!("frame {t} has the wrong joint count")));
    }
    let canonical = canonical_vertices(shape, params);
    let weights = params.skin_weights(k);
    Ok(poses.frames.par_iter().map(|f| deform_canonical(shape, params, &canonical, &weights, f)).collect())
}

/// Energy of a scene state against observations.
pub fn total_energy(
    shape: &SkeletalShape,
    params: &ShapeParams,
    poses: &PoseSequence,
    obs: &ObservationSequence,
    weights: &EnergyWeights,
    sigma: f64,
) -> Result<EnergyBreakdown> {
    if poses.len() != obs.masks.len() {
        return Err(Error::dim(format!("{} poses for {} observed frames", poses.len(), obs.masks.len())));
    }
    let frames = deform_sequence(shape, params, poses)?;
    let faces = &shape.mesh.faces;
    let cam = &obs.camera;
    let masks: Vec<SilhouetteMap> = frames.par_iter().map(|v| rasterize_soft(v, faces, cam, sigma)).collect();
    let flows: Vec<FlowMap> = (0..obs.flows.len())
        .into_par_iter()
        .map(|t| render_flow(&frames[t], &frames[t + 1], faces, cam))
        .collect::<Result<_>>()?;
    check_frames(&masks, &obs.masks, &flows, &obs.flows)?;
    let mut mask = 0.0;
    for (r, o) in masks.iter().zip(&obs.masks) {
        mask += mask_residual(r, o)?;
    }
    let mut flow = 0.0;
    for (r, o) in flows.iter().zip(&obs.flows) {
        flow += flow_energy(r, o)?;
    }
    let smooth = e_smooth(poses);
    let symm = e_symm(&canonical_vertices(shape, params), weights.normal())?;
    Ok(EnergyBreakdown::from_terms(mask, flow, smooth, symm, weights))
}
