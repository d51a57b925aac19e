//! Finite-difference check of every energy term against every variable
//! class.
//!
//! The energy is piecewise smooth: flow visibility, nearest-neighbor
//! assignments, ReLU gates, clamps and the soft raster's nearest edges
//! switch discretely. Difference quotients are only taken between points
//! that share the discrete state of the base point; when one side crosses
//! a switch the stencil becomes one-sided, and when both do the component
//! is skipped. Skips are counted and bounded per (term, class).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grad::{gradients, ClassSet};
use super::{VarBlocks, VarClass};
use crate::energy::{deform_sequence, e_smooth, e_symm, flow_energy, mask_residual, EnergyWeights};
use crate::error::Result;
use crate::math::Vec3;
use crate::render::{coverage, rasterize_soft, render_flow, soft_signature};
use crate::skeleton::{canonical_vertices, endpoint_regions, PoseSequence, ShapeParams};
use crate::synthetic::{grad_scene, GradScene};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Mask,
    Flow,
    Smooth,
    Symm,
}

impl Term {
    pub const ALL: [Term; 4] = [Term::Mask, Term::Flow, Term::Smooth, Term::Symm];

    pub fn name(self) -> &'static str {
        match self {
            Term::Mask => "mask",
            Term::Flow => "flow",
            Term::Smooth => "smooth",
            Term::Symm => "symm",
        }
    }

    fn weights(self) -> EnergyWeights {
        let mut w = EnergyWeights::zero();
        match self {
            Term::Mask => w.w_mask = 1.0,
            Term::Flow => w.w_flow = 1.0,
            Term::Smooth => w.w_smooth = 1.0,
            Term::Symm => w.w_symm = 1.0,
        }
        w
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub scenes: usize,
    pub h: f64,
    pub rel_tol: f64,
    /// Components whose analytic value is below this are compared absolutely.
    pub abs_tol: f64,
    /// Components sampled per class (all when the class is smaller).
    pub samples: usize,
    pub sigma: f64,
    /// Largest tolerated fraction of skipped components per (term, class)
    /// over all scenes.
    pub max_skip_fraction: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig { scenes: 10, h: 1e-4, rel_tol: 1e-3, abs_tol: 1e-6, samples: 64, sigma: 1e-3, max_skip_fraction: 0.25 }
    }
}

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub scene: u64,
    pub term: Term,
    pub class: VarClass,
    pub checked: usize,
    pub skipped: usize,
    /// Checked components that used a one-sided stencil.
    pub one_sided: usize,
    /// Skipped components whose difference quotient did not settle between
    /// `h` and `h / 2`.
    pub unresolved: usize,
    pub failures: usize,
    /// Largest error, relative where the analytic value is above the
    /// absolute threshold and absolute otherwise.
    pub worst: f64,
}

/// Totals for one (term, class) pair over every scene.
#[derive(Debug, Clone)]
pub struct PairSummary {
    pub term: Term,
    pub class: VarClass,
    pub checked: usize,
    pub skipped: usize,
    pub one_sided: usize,
    pub unresolved: usize,
    pub failures: usize,
    pub worst: f64,
}

impl PairSummary {
    /// No failure, and at most `max_skip_fraction` of the sampled
    /// components skipped.
    pub fn passed(&self, cfg: &GradcheckConfig) -> bool {
        let total = self.checked + self.skipped;
        self.failures == 0 && (total == 0 || self.skipped as f64 <= cfg.max_skip_fraction * total as f64)
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockReport>,
    pub config: GradcheckConfig,
}

impl GradcheckReport {
    pub fn summary(&self) -> Vec<PairSummary> {
        let mut out = Vec::new();
        for term in Term::ALL {
            for class in VarClass::ALL {
                let mut s = PairSummary { term, class, checked: 0, skipped: 0, one_sided: 0, unresolved: 0, failures: 0, worst: 0.0 };
                for b in self.blocks.iter().filter(|b| b.term == term && b.class == class) {
                    s.checked += b.checked;
                    s.skipped += b.skipped;
                    s.one_sided += b.one_sided;
                    s.unresolved += b.unresolved;
                    s.failures += b.failures;
                    s.worst = s.worst.max(b.worst);
                }
                out.push(s);
            }
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.summary().iter().all(|s| s.passed(&self.config))
    }

    pub fn failing(&self) -> Vec<PairSummary> {
        self.summary().into_iter().filter(|s| !s.passed(&self.config)).collect()
    }
}

/// Value of a single unweighted term.
fn term_value(term: Term, scene: &GradScene, params: &ShapeParams, poses: &PoseSequence, sigma: f64) -> Result<f64> {
    let shape = &scene.shape;
    let obs = &scene.obs;
    match term {
        Term::Mask => {
            let frames = deform_sequence(shape, params, poses)?;
            frames
                .iter()
                .zip(&obs.masks)
                .map(|(v, m)| mask_residual(&rasterize_soft(v, &shape.mesh.faces, &obs.camera, sigma), m))
                .sum()
        }
        Term::Flow => {
            let frames = deform_sequence(shape, params, poses)?;
            (0..obs.flows.len())
                .map(|t| {
                    let f = render_flow(&frames[t], &frames[t + 1], &shape.mesh.faces, &obs.camera)?;
                    flow_energy(&f, &obs.flows[t])
                })
                .sum()
        }
        Term::Smooth => Ok(e_smooth(poses)),
        Term::Symm => e_symm(&canonical_vertices(shape, params), Vec3::new(1.0, 0.0, 0.0)),
    }
}

/// Discrete state that the term depends on piecewise. `exact` must match
/// in full; `keyed` entries must agree where a key is present on both sides.
#[derive(Debug, PartialEq)]
struct Signature {
    exact: Vec<u64>,
    keyed: Vec<(u64, u8)>,
}

impl Signature {
    fn compatible(&self, other: &Signature) -> bool {
        if self.exact != other.exact {
            return false;
        }
        let (a, b) = (&self.keyed, &other.keyed);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if a[i].1 != b[j].1 {
                        return false;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        true
    }
}

fn signature(term: Term, scene: &GradScene, params: &ShapeParams, poses: &PoseSequence, sigma: f64) -> Result<Signature> {
    let shape = &scene.shape;
    let cam = &scene.obs.camera;
    let points: Vec<Vec3> = shape.mesh.vertices.iter().map(|v| *v * params.scale).collect();
    let canonical = canonical_vertices(shape, params);
    let mut keyed = Vec::new();
    let mut sig: Vec<u64> = params.displacement.relu_pattern(&points).into_iter().map(u64::from).collect();
    match term {
        Term::Mask | Term::Flow => {
            sig.extend(endpoint_regions(shape, params, &canonical).into_iter().map(u64::from));
            let frames = deform_sequence(shape, params, poses)?;
            for (t, v) in frames.iter().enumerate() {
                if term == Term::Mask {
                    // frame index goes in the top bits, above pixel and face
                    let tag = (t as u64) << 56;
                    keyed.extend(soft_signature(v, &shape.mesh.faces, cam, sigma).into_iter().map(|(k, e)| (k | tag, e)));
                } else {
                    sig.extend(coverage(v, &shape.mesh.faces, cam).iter().map(|c| c.map_or(u64::MAX, |c| c.face as u64)));
                }
            }
        }
        Term::Smooth => {
            for w in poses.frames.windows(2) {
                for (a, b) in w[0].joints.iter().zip(&w[1].joints) {
                    let r = a.normalized().conjugate().mul(&b.normalized());
                    sig.push(u64::from(r.w < 0.0));
                }
            }
        }
        Term::Symm => {
            let mirrored: Vec<Vec3> = canonical.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
            for (from, to) in [(&canonical, &mirrored), (&mirrored, &canonical)] {
                for p in from.iter() {
                    let j = (0..to.len()).min_by(|&a, &b| p.dist_sq(&to[a]).total_cmp(&p.dist_sq(&to[b]))).unwrap_or(0);
                    sig.push(j as u64);
                }
            }
        }
    }
    Ok(Signature { exact: sig, keyed })
}

fn with_component(base: &VarBlocks, class: VarClass, i: usize, delta: f64, scene: &GradScene) -> Result<(ShapeParams, PoseSequence)> {
    let mut vars = base.clone();
    vars.get_mut(class)[i] += delta;
    let mut params = scene.params.clone();
    let mut poses = scene.poses.clone();
    vars.unpack(&mut params, &mut poses)?;
    Ok((params, poses))
}

/// Term value after moving one component by `delta`, if the move keeps the
/// discrete state compatible with the base point.
#[allow(clippy::too_many_arguments)]
fn probe(
    term: Term,
    scene: &GradScene,
    base: &VarBlocks,
    class: VarClass,
    i: usize,
    delta: f64,
    sig0: &Signature,
    sigma: f64,
) -> Result<Option<f64>> {
    let (p, q) = with_component(base, class, i, delta, scene)?;
    if !signature(term, scene, &p, &q, sigma)?.compatible(sig0) {
        return Ok(None);
    }
    term_value(term, scene, &p, &q, sigma).map(Some)
}

/// Fourth-order central difference with step `h`, or the fourth-order
/// one-sided stencil on whichever side stays clear of a kink when the
/// other side crosses one. `None` when both sides cross.
#[allow(clippy::too_many_arguments)]
fn stencil(
    term: Term,
    scene: &GradScene,
    base: &VarBlocks,
    class: VarClass,
    i: usize,
    sig0: &Signature,
    sigma: f64,
    h: f64,
) -> Result<Option<(f64, bool)>> {
    let side = |dir: f64, steps: usize| -> Result<Option<Vec<f64>>> {
        let mut out = Vec::with_capacity(steps);
        for k in 1..=steps {
            match probe(term, scene, base, class, i, dir * k as f64 * h, sig0, sigma)? {
                Some(f) => out.push(f),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    };
    let plus = side(1.0, 2)?;
    let minus = side(-1.0, 2)?;
    if let (Some(p), Some(m)) = (&plus, &minus) {
        return Ok(Some(((8.0 * (p[0] - m[0]) - (p[1] - m[1])) / (12.0 * h), false)));
    }
    for (dir, near) in [(1.0, plus), (-1.0, minus)] {
        if near.is_none() {
            continue;
        }
        let Some(f) = side(dir, 4)? else { continue };
        let (p0, q0) = with_component(base, class, i, 0.0, scene)?;
        let f0 = term_value(term, scene, &p0, &q0, sigma)?;
        let d = -25.0 * f0 + 48.0 * f[0] - 36.0 * f[1] + 16.0 * f[2] - 3.0 * f[3];
        return Ok(Some((dir * d / (12.0 * h), true)));
    }
    Ok(None)
}

/// Error of `estimate` against `reference` under the block tolerances:
/// relative above `abs_tol`, absolute below. Returns `(error, tolerance)`.
fn deviation(estimate: f64, reference: f64, cfg: &GradcheckConfig) -> (f64, f64) {
    if reference.abs() < cfg.abs_tol {
        ((estimate - reference).abs(), cfg.abs_tol)
    } else {
        ((estimate - reference).abs() / reference.abs(), cfg.rel_tol)
    }
}

/// Difference quotient at step `h`, accepted only where repeating the same
/// stencil at `h / 2` agrees with it within the tolerances. A function that
/// varies faster than `h` resolves, or that hides a kink between stencil
/// points, is left unchecked.
#[allow(clippy::too_many_arguments)]
fn difference(
    term: Term,
    scene: &GradScene,
    base: &VarBlocks,
    class: VarClass,
    i: usize,
    sig0: &Signature,
    cfg: &GradcheckConfig,
    rep: &mut BlockReport,
) -> Result<Option<f64>> {
    let Some((coarse, one_sided)) = stencil(term, scene, base, class, i, sig0, cfg.sigma, cfg.h)? else {
        return Ok(None);
    };
    let Some((fine, _)) = stencil(term, scene, base, class, i, sig0, cfg.sigma, cfg.h / 2.0)? else {
        return Ok(None);
    };
    let (err, tol) = deviation(coarse, fine, cfg);
    if !(err <= tol) {
        rep.unresolved += 1;
        return Ok(None);
    }
    if one_sided {
        rep.one_sided += 1;
    }
    Ok(Some(coarse))
}

/// Checks one scene; one report per (term, class).
pub fn check_scene(scene: &GradScene, seed: u64, cfg: &GradcheckConfig) -> Result<Vec<BlockReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let base = VarBlocks::pack(&scene.params, &scene.poses);
    let mut out = Vec::new();
    for term in Term::ALL {
        let (_, analytic) =
            gradients(&scene.shape, &scene.params, &scene.poses, &scene.obs, &term.weights(), cfg.sigma, ClassSet::ALL)?;
        let sig0 = signature(term, scene, &scene.params, &scene.poses, cfg.sigma)?;
        for class in VarClass::ALL {
            let len = base.get(class).len();
            let picks: Vec<usize> =
                if len <= cfg.samples { (0..len).collect() } else { sample(&mut rng, len, cfg.samples).into_vec() };
            let mut rep = BlockReport { scene: seed, term, class, checked: 0, skipped: 0, one_sided: 0, unresolved: 0, failures: 0, worst: 0.0 };
            for i in picks {
                let Some(fd) = difference(term, scene, &base, class, i, &sig0, cfg, &mut rep)? else {
                    rep.skipped += 1;
                    continue;
                };
                let a = analytic.get(class)[i];
                let (err, tol) = deviation(fd, a, cfg);
                rep.checked += 1;
                rep.worst = rep.worst.max(err);
                if !(err <= tol) {
                    rep.failures += 1;
                }
            }
            out.push(rep);
        }
    }
    Ok(out)
}

/// Runs the suite over `cfg.scenes` scenes derived from `seed`.
pub fn gradcheck(seed: u64, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut blocks = Vec::new();
    for s in 0..cfg.scenes as u64 {
        let scene_seed = seed.wrapping_mul(1_000_003).wrapping_add(s);
        let scene = grad_scene(scene_seed)?;
        blocks.extend(check_scene(&scene, scene_seed, cfg)?);
    }
    Ok(GradcheckReport { blocks, config: cfg.clone() })
}
