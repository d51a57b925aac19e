//! Camera initialization by sphere sampling and local refinement.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamParams};
use crate::energy::{mask_residual, mask_residual_grad};
use crate::error::{Error, Result};
use crate::math::{bounding_box, Mat3, Quat, Rigid, Vec3};
use crate::render::{rasterize_soft, rasterize_soft_backward, Camera, SilhouetteMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSearchConfig {
    /// Sphere radius; `None` uses three times the rest bounding diagonal.
    pub radius: Option<f64>,
    pub candidates: usize,
    pub top_k: usize,
    /// Local sampling radius; `None` uses `0.1 · radius`.
    pub refine_radius: Option<f64>,
    pub refine_samples: usize,
    pub max_rounds: usize,
    /// Stop a candidate once its mask loss improved by less than this
    /// fraction over `patience` iterations.
    pub tolerance: f64,
    pub patience: usize,
    pub max_iters: usize,
    pub rate: f64,
    pub sigma: f64,
}

impl Default for CameraSearchConfig {
    fn default() -> Self {
        CameraSearchConfig {
            radius: None,
            candidates: 256,
            top_k: 10,
            refine_radius: None,
            refine_samples: 4,
            max_rounds: 1,
            tolerance: 1e-3,
            patience: 10,
            max_iters: 50,
            rate: 2e-2,
            sigma: 1e-3,
        }
    }
}

impl CameraSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.radius {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::invariant("camera_search.radius", "must be positive"));
            }
        }
        if let Some(r) = self.refine_radius {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::invariant("camera_search.refine_radius", "must be non-negative"));
            }
        }
        if self.candidates == 0 {
            return Err(Error::invariant("camera_search.candidates", "must be at least 1"));
        }
        if self.top_k == 0 || self.top_k > self.candidates {
            return Err(Error::invariant("camera_search.top_k", "must lie in [1, candidates]"));
        }
        if !(self.rate > 0.0) || !(self.sigma > 0.0) || !(self.tolerance >= 0.0) {
            return Err(Error::invariant("camera_search", "rate and sigma must be positive, tolerance non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraEstimate {
    pub camera: Camera,
    /// Object-to-camera placement, held fixed during fitting.
    pub root: Rigid,
    pub loss: f64,
    /// Lowest loss among the first-round candidates.
    pub round1_loss: f64,
    pub evaluated: usize,
}

/// Object-to-camera transform of a camera at `eye` looking at `target`
/// (camera looks along +z, image v points down).
pub fn look_at(eye: Vec3, target: Vec3) -> Rigid {
    let fwd = target - eye;
    let fwd = fwd * (1.0 / fwd.norm());
    let helper = if fwd.y.abs() > 0.99 { Vec3::new(0.0, 0.0, 1.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let right = fwd.cross(&helper);
    let right = right * (1.0 / right.norm());
    let down = fwd.cross(&right);
    // rows of the world-to-camera rotation are the camera axes
    let rot = Mat3 { m: [right.to_array(), down.to_array(), fwd.to_array()] };
    let q = Quat::from_mat3(&rot);
    Rigid::new(q, -q.rotate(eye))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    eye: Vec3,
    offset: Vec3,
    log_focal: f64,
    loss: f64,
}

struct Problem<'a> {
    vertices: &'a [Vec3],
    faces: &'a [[usize; 3]],
    masks: &'a [SilhouetteMap],
    base: Camera,
    center: Vec3,
    radius: f64,
    search: &'a CameraSearchConfig,
}

impl Problem<'_> {
    fn camera(&self, log_focal: f64) -> Camera {
        let s = log_focal.exp();
        Camera { fx: self.base.fx * s, fy: self.base.fy * s, ..self.base }
    }

    fn transform(&self, eye: Vec3, offset: Vec3) -> Vec<Vec3> {
        let g = look_at(eye, self.center + offset);
        self.vertices.iter().map(|v| g.apply(*v)).collect()
    }

    fn loss_and_grad(&self, c: &Candidate) -> (f64, [f64; 4]) {
        let cam = self.camera(c.log_focal);
        let pts = self.transform(c.eye, c.offset);
        let soft = rasterize_soft(&pts, self.faces, &cam, self.search.sigma);
        let inv_t = 1.0 / self.masks.len() as f64;
        let mut loss = 0.0;
        let mut gs = vec![0.0; soft.data.len()];
        for m in self.masks {
            loss += mask_residual(&soft, m).unwrap_or(f64::INFINITY) * inv_t;
            for (a, b) in gs.iter_mut().zip(mask_residual_grad(&soft, m)) {
                *a += b * inv_t;
            }
        }
        let gx = rasterize_soft_backward(&pts, self.faces, &cam, self.search.sigma, &gs);
        // scaling both focal lengths equals scaling camera-space x and y
        let g_focal: f64 = gx.iter().zip(&pts).map(|(g, p)| g.x * p.x + g.y * p.y).sum();
        let mut grad = [g_focal, 0.0, 0.0, 0.0];
        let h = 1e-6 * self.radius;
        for (a, axis) in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)].iter().enumerate() {
            let plus = self.transform(c.eye, c.offset + *axis * h);
            let minus = self.transform(c.eye, c.offset - *axis * h);
            grad[a + 1] = gx
                .iter()
                .zip(plus.iter().zip(&minus))
                .map(|(g, (p, m))| g.dot(&((*p - *m) * (0.5 / h))))
                .sum();
        }
        (loss, grad)
    }

    /// Adam on focal length and look-at offset; returns the best iterate.
    fn refine(&self, eye: Vec3) -> Candidate {
        let mut cur = Candidate { eye, offset: Vec3::zeros(), log_focal: 0.0, loss: f64::INFINITY };
        let mut best = cur;
        let mut x = [0.0; 4];
        let (mut m, mut v) = ([0.0; 4], [0.0; 4]);
        let mut trace = Vec::with_capacity(self.search.max_iters + 1);
        let adam = AdamParams::default();
        for it in 0..=self.search.max_iters {
            cur.log_focal = x[0];
            cur.offset = Vec3::new(x[1], x[2], x[3]) * self.radius;
            let (loss, g) = self.loss_and_grad(&cur);
            if !loss.is_finite() {
                break;
            }
            cur.loss = loss;
            if loss < best.loss {
                best = cur;
            }
            trace.push(loss);
            let p = self.search.patience;
            if p > 0 && trace.len() > p {
                let old = trace[trace.len() - 1 - p];
                if old - loss < self.search.tolerance * old {
                    break;
                }
            }
            if it == self.search.max_iters || g.iter().any(|v| !v.is_finite()) {
                break;
            }
            // offsets are optimized in units of the sphere radius
            let gn = [g[0], g[1] * self.radius, g[2] * self.radius, g[3] * self.radius];
            if adam_step(&mut x, &gn, &mut m, &mut v, self.search.rate, &adam, it as u64 + 1).is_err() {
                break;
            }
        }
        best
    }
}

fn unit_sphere<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

fn unit_ball<R: Rng>(rng: &mut R) -> Vec3 {
    let r: f64 = rng.gen::<f64>().cbrt();
    unit_sphere(rng) * r
}

fn keep_best(mut pool: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    // stable: earlier candidates win ties
    pool.sort_by(|a, b| a.loss.total_cmp(&b.loss));
    pool.truncate(k);
    pool
}

/// Searches camera placements around the rest mesh against the observed
/// masks. Intrinsics start from `base`; `seeds` are extra first-round eye
/// positions evaluated before the random ones.
pub fn estimate_camera<R: Rng>(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    masks: &[SilhouetteMap],
    base: &Camera,
    search: &CameraSearchConfig,
    seeds: &[Vec3],
    rng: &mut R,
) -> Result<CameraEstimate> {
    search.validate()?;
    base.validate()?;
    if masks.is_empty() {
        return Err(Error::invalid("camera estimation needs at least one mask"));
    }
    if let Some(t) = masks.iter().position(|m| (m.width, m.height) != (base.width, base.height)) {
        return Err(Error::dim(format!("mask {t} does not match the camera size")));
    }
    let (lo, hi) = bounding_box(vertices).ok_or_else(|| Error::invalid("camera estimation needs a nonempty mesh"))?;
    let center = (lo + hi) * 0.5;
    let diag = (hi - lo).norm().max(1e-9);
    let radius = search.radius.unwrap_or(3.0 * diag);
    let local = search.refine_radius.unwrap_or(0.1 * radius);
    let problem = Problem { vertices, faces, masks, base: *base, center, radius, search };

    let mut eyes: Vec<Vec3> = seeds.to_vec();
    eyes.extend((0..search.candidates).map(|_| center + unit_sphere(rng) * radius));
    let round1: Vec<Candidate> = eyes.par_iter().map(|e| problem.refine(*e)).collect();
    let mut evaluated = round1.len();
    let round1_loss = round1.iter().map(|c| c.loss).fold(f64::INFINITY, f64::min);
    let mut pool = keep_best(round1, search.top_k);
    for _ in 0..search.max_rounds {
        let local_eyes: Vec<Vec3> = pool
            .iter()
            .flat_map(|c| (0..search.refine_samples).map(|_| c.eye + unit_ball(rng) * local).collect::<Vec<_>>())
            .collect();
        let refined: Vec<Candidate> = local_eyes.par_iter().map(|e| problem.refine(*e)).collect();
        evaluated += refined.len();
        pool.extend(refined);
        pool = keep_best(pool, search.top_k);
    }
    let best = pool.first().copied().filter(|c| c.loss.is_finite()).ok_or_else(|| {
        Error::Runtime("camera search found no candidate with a finite mask loss".into())
    })?;
    Ok(CameraEstimate {
        camera: problem.camera(best.log_focal),
        root: look_at(best.eye, center + best.offset),
        loss: best.loss,
        round1_loss,
        evaluated,
    })
}
