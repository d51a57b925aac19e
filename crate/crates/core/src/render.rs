//! Pinhole projection, soft silhouette rasterization and flow rendering.
//!
//! Soft coverage of pixel `p` by triangle `j` is
//! `D_j(p) = logistic(±d²(p, ∂j) / σ)` (+ inside, − outside) with `d`
//! measured in normalized device units, where the longer image side spans
//! `[-1, 1]`. Pixel occupancy is `1 − Π_j (1 − D_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Points at or in front of this depth are not projected.
pub const NEAR_EPS: f64 = 1e-6;

/// Fragments whose logit is below `-CULL_LOGIT` are dropped (`D < 1e-17`).
const CULL_LOGIT: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Camera { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// Centered principal point with equal focal lengths.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Camera::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invariant("camera.fx/fy", "focal lengths must be positive"));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::invariant("camera.width/height", "image must be at least 1×1"));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::invariant("camera.cx/cy", "principal point must be finite"));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Pixel-to-NDC scale factor.
    pub fn ndc_scale(&self) -> f64 {
        2.0 / self.width.max(self.height) as f64
    }

    fn pixel_center_ndc(&self, i: usize, j: usize) -> [f64; 2] {
        let s = self.ndc_scale();
        [
            (i as f64 + 0.5 - self.width as f64 / 2.0) * s,
            (j as f64 + 0.5 - self.height as f64 / 2.0) * s,
        ]
    }

    fn to_ndc(&self, uv: [f64; 2]) -> [f64; 2] {
        let s = self.ndc_scale();
        [(uv[0] - self.width as f64 / 2.0) * s, (uv[1] - self.height as f64 / 2.0) * s]
    }

    /// Inclusive pixel index range whose centers may fall in `[lo, hi]` (pixel units).
    fn pixel_range(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
        let a = (lo - 0.5).ceil().max(0.0);
        let b = (hi - 0.5).floor().min(n as f64 - 1.0);
        if a > b || !a.is_finite() || !b.is_finite() {
            None
        } else {
            Some((a as usize, b as usize))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub uv: [f64; 2],
    pub depth: f64,
    pub valid: bool,
}

/// `(u, v) = (fx x/z + cx, fy y/z + cy)`; points with `z ≤ ε` are flagged invalid.
pub fn project(points: &[Vec3], cam: &Camera) -> Vec<Projected> {
    points
        .iter()
        .map(|p| {
            if p.z <= NEAR_EPS {
                Projected { uv: [0.0, 0.0], depth: p.z, valid: false }
            } else {
                Projected { uv: [cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy], depth: p.z, valid: true }
            }
        })
        .collect()
}

/// Row-major `height × width` occupancy in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl SilhouetteMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        SilhouetteMap { width, height, data: vec![0.0; width * height] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.width + i]
    }

    /// Pixel bounding box `(i_min, j_min, i_max, j_max)` of values ≥ `threshold`.
    pub fn bbox(&self, threshold: f64) -> Option<(usize, usize, usize, usize)> {
        let mut out: Option<(usize, usize, usize, usize)> = None;
        for j in 0..self.height {
            for i in 0..self.width {
                if self.get(i, j) >= threshold {
                    out = Some(match out {
                        None => (i, j, i, j),
                        Some((a, b, c, d)) => (a.min(i), b.min(j), c.max(i), d.max(j)),
                    });
                }
            }
        }
        out
    }

    /// Intersection over union of the two maps thresholded at 0.5; 1 when both are empty.
    pub fn iou(&self, other: &SilhouetteMap) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.data.iter().zip(&other.data) {
            let (a, b) = (*a >= 0.5, *b >= 0.5);
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Per-pixel displacement to the next frame (u right, v down, pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub width: usize,
    pub height: usize,
    pub flow: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

impl FlowMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        FlowMap { width, height, flow: vec![[0.0; 2]; width * height], valid: vec![false; width * height] }
    }
}

#[derive(Clone, Copy)]
struct Tri2 {
    p: [[f64; 2]; 3],
}

fn cross2(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Gradients of `cross2(x, y, p)` with respect to `x`, `y` and `p`.
fn cross2_grads(x: [f64; 2], y: [f64; 2], p: [f64; 2]) -> ([f64; 2], [f64; 2], [f64; 2]) {
    (
        [y[1] - p[1], p[0] - y[0]],
        [p[1] - x[1], -(p[0] - x[0])],
        [-(y[1] - x[1]), y[0] - x[0]],
    )
}

impl Tri2 {
    fn inside(&self, q: [f64; 2]) -> bool {
        let [a, b, c] = self.p;
        let area = cross2(a, b, c);
        if area == 0.0 {
            return false;
        }
        let e0 = cross2(a, b, q);
        let e1 = cross2(b, c, q);
        let e2 = cross2(c, a, q);
        if area > 0.0 {
            e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0
        } else {
            e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0
        }
    }

    fn bary(&self, q: [f64; 2]) -> Option<[f64; 3]> {
        let [a, b, c] = self.p;
        let area = cross2(a, b, c);
        if area == 0.0 {
            return None;
        }
        Some([cross2(b, c, q) / area, cross2(c, a, q) / area, cross2(a, b, q) / area])
    }

    /// Squared distance to the nearest edge: `(d², edge index, segment parameter)`.
    fn boundary_dist(&self, q: [f64; 2]) -> (f64, usize, f64) {
        let mut best = (f64::INFINITY, 0, 0.0);
        for e in 0..3 {
            let a = self.p[e];
            let b = self.p[(e + 1) % 3];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len_sq = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if len_sq > 0.0 {
                (((q[0] - a[0]) * ab[0] + (q[1] - a[1]) * ab[1]) / len_sq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let r = [q[0] - a[0] - t * ab[0], q[1] - a[1] - t * ab[1]];
            let d = r[0] * r[0] + r[1] * r[1];
            if d < best.0 {
                best = (d, e, t);
            }
        }
        best
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = self.p[0];
        let mut hi = self.p[0];
        for q in &self.p[1..] {
            lo = [lo[0].min(q[0]), lo[1].min(q[1])];
            hi = [hi[0].max(q[0]), hi[1].max(q[1])];
        }
        (lo, hi)
    }
}

/// Occupancy sensitivity below which a fragment's kinks are ignored.
const SIGNATURE_SENSITIVITY: f64 = 1e-9;
/// Pixel field of the orientation entries in [`soft_signature`].
const ORIENTATION_KEY: u64 = (1 << 24) - 1;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Projected triangles in NDC; `None` where a vertex is behind the near plane.
fn ndc_triangles(proj: &[Projected], faces: &[[usize; 3]], cam: &Camera) -> Vec<Option<Tri2>> {
    faces
        .iter()
        .map(|f| {
            if f.iter().any(|&i| !proj[i].valid) {
                return None;
            }
            Some(Tri2 { p: [cam.to_ndc(proj[f[0]].uv), cam.to_ndc(proj[f[1]].uv), cam.to_ndc(proj[f[2]].uv)] })
        })
        .collect()
}

fn pixel_tri2(proj: &[Projected], f: &[usize; 3]) -> Option<Tri2> {
    if f.iter().any(|&i| !proj[i].valid) {
        return None;
    }
    Some(Tri2 { p: [proj[f[0]].uv, proj[f[1]].uv, proj[f[2]].uv] })
}

#[derive(Clone, Copy)]
struct Fragment {
    face: u32,
    edge: u8,
    inside: bool,
    t: f64,
    /// logistic(+logit) = D, logistic(−logit) = 1 − D.
    logit: f64,
}

/// Per-pixel fragment lists in triangle order.
fn soft_fragments(tris: &[Option<Tri2>], cam: &Camera, sigma: f64) -> Vec<Vec<Fragment>> {
    let mut frags: Vec<Vec<Fragment>> = vec![Vec::new(); cam.pixels()];
    let s = cam.ndc_scale();
    let reach = (CULL_LOGIT * sigma).sqrt();
    for (fi, tri) in tris.iter().enumerate() {
        let Some(tri) = tri else { continue };
        let (lo, hi) = tri.bounds();
        // NDC → pixel coordinates
        let to_px = |v: f64, n: usize| v / s + n as f64 / 2.0;
        let Some((i0, i1)) =
            Camera::pixel_range(to_px(lo[0] - reach, cam.width), to_px(hi[0] + reach, cam.width), cam.width)
        else {
            continue;
        };
        let Some((j0, j1)) =
            Camera::pixel_range(to_px(lo[1] - reach, cam.height), to_px(hi[1] + reach, cam.height), cam.height)
        else {
            continue;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                let q = cam.pixel_center_ndc(i, j);
                let inside = tri.inside(q);
                let (d2, edge, t) = tri.boundary_dist(q);
                let logit = if inside { d2 / sigma } else { -d2 / sigma };
                if logit < -CULL_LOGIT {
                    continue;
                }
                frags[j * cam.width + i].push(Fragment { face: fi as u32, edge: edge as u8, inside, t, logit });
            }
        }
    }
    frags
}

/// Discrete state of the soft raster, as `(key, value)` pairs sorted by
/// key. The logit is continuously differentiable outside a triangle and
/// across its boundary, so the kinks are a change of nearest edge inside a
/// triangle and a triangle flipping orientation, which swaps its nearest
/// edge for outside points. Entries are kept for fragments whose occupancy
/// sensitivity `Π_{i≠j}(1 − D_i) D_j (1 − D_j)` reaches
/// `SIGNATURE_SENSITIVITY`: the interior edge keyed by `(pixel, face)` and
/// the orientation keyed by face alone.
pub(crate) fn soft_signature(vertices: &[Vec3], faces: &[[usize; 3]], cam: &Camera, sigma: f64) -> Vec<(u64, u8)> {
    let proj = project(vertices, cam);
    let tris = ndc_triangles(&proj, faces, cam);
    let frags = soft_fragments(&tris, cam, sigma);
    let mut out = Vec::new();
    let mut live = vec![false; faces.len()];
    for (pix, list) in frags.iter().enumerate() {
        let keep: Vec<f64> = list.iter().map(|f| logistic(-f.logit)).collect();
        for (j, f) in list.iter().enumerate() {
            let others: f64 = keep.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, k)| k).product();
            if others * keep[j] * (1.0 - keep[j]) < SIGNATURE_SENSITIVITY {
                continue;
            }
            live[f.face as usize] = true;
            if f.inside {
                out.push((((pix as u64) << 32) | f.face as u64, f.edge));
            }
        }
    }
    // orientation keys sort after every pixel key
    for (fi, tri) in tris.iter().enumerate() {
        if let (true, Some(t)) = (live[fi], tri) {
            let area = cross2(t.p[0], t.p[1], t.p[2]);
            out.push(((ORIENTATION_KEY << 32) | fi as u64, u8::from(area > 0.0)));
        }
    }
    out
}

/// Differentiable soft silhouette. `sigma` is in squared NDC units.
pub fn rasterize_soft(vertices: &[Vec3], faces: &[[usize; 3]], cam: &Camera, sigma: f64) -> SilhouetteMap {
    let proj = project(vertices, cam);
    let tris = ndc_triangles(&proj, faces, cam);
    let frags = soft_fragments(&tris, cam, sigma);
    let data = frags
        .iter()
        .map(|list| 1.0 - list.iter().fold(1.0, |acc, f| acc * logistic(-f.logit)))
        .collect();
    SilhouetteMap { width: cam.width, height: cam.height, data }
}

/// Gradient of `Σ_p grad[p] · occupancy[p]` with respect to every vertex.
pub fn rasterize_soft_backward(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    cam: &Camera,
    sigma: f64,
    grad: &[f64],
) -> Vec<Vec3> {
    let proj = project(vertices, cam);
    let tris = ndc_triangles(&proj, faces, cam);
    let frags = soft_fragments(&tris, cam, sigma);
    let mut g2 = vec![[0.0f64; 2]; vertices.len()];
    let mut suffix = Vec::new();
    for (pix, list) in frags.iter().enumerate() {
        let gp = grad[pix];
        if gp == 0.0 || list.is_empty() {
            continue;
        }
        let q = cam.pixel_center_ndc(pix % cam.width, pix / cam.width);
        // Π_{i≠j}(1 − D_i) via suffix products and a running prefix
        suffix.clear();
        suffix.resize(list.len() + 1, 1.0);
        for (n, f) in list.iter().enumerate().rev() {
            suffix[n] = suffix[n + 1] * logistic(-f.logit);
        }
        let mut prefix = 1.0;
        for (n, f) in list.iter().enumerate() {
            let one_minus = logistic(-f.logit);
            let d = logistic(f.logit);
            let d_occ = prefix * suffix[n + 1];
            prefix *= one_minus;
            let sign = if f.inside { 1.0 } else { -1.0 };
            // dL/d(d²)
            let coef = gp * d_occ * d * one_minus * sign / sigma;
            if coef == 0.0 {
                continue;
            }
            let tri = tris[f.face as usize].expect("fragments only come from valid triangles");
            let e = f.edge as usize;
            let a = tri.p[e];
            let b = tri.p[(e + 1) % 3];
            let t = f.t;
            let r = [q[0] - a[0] - t * (b[0] - a[0]), q[1] - a[1] - t * (b[1] - a[1])];
            let face = faces[f.face as usize];
            let (ia, ib) = (face[e], face[(e + 1) % 3]);
            for c in 0..2 {
                g2[ia][c] += coef * -2.0 * r[c] * (1.0 - t);
                g2[ib][c] += coef * -2.0 * r[c] * t;
            }
        }
    }
    let s = cam.ndc_scale();
    chain_projection(vertices, &proj, cam, &g2, s)
}

/// Pull gradients with respect to scaled image coordinates back to 3D points.
fn chain_projection(vertices: &[Vec3], proj: &[Projected], cam: &Camera, g2: &[[f64; 2]], scale: f64) -> Vec<Vec3> {
    vertices
        .iter()
        .zip(proj)
        .zip(g2)
        .map(|((p, pr), g)| {
            if !pr.valid || (g[0] == 0.0 && g[1] == 0.0) {
                return Vec3::zeros();
            }
            let iz = 1.0 / p.z;
            let gu = g[0] * scale * cam.fx;
            let gv = g[1] * scale * cam.fy;
            Vec3::new(gu * iz, gv * iz, -(gu * p.x + gv * p.y) * iz * iz)
        })
        .collect()
}

/// Binary silhouette: 1 where a pixel center lies inside any projected triangle.
pub fn rasterize_hard(vertices: &[Vec3], faces: &[[usize; 3]], cam: &Camera) -> SilhouetteMap {
    let proj = project(vertices, cam);
    let mut map = SilhouetteMap::zeros(cam.width, cam.height);
    for f in faces {
        let Some(tri) = pixel_tri2(&proj, f) else { continue };
        let (lo, hi) = tri.bounds();
        let (Some((i0, i1)), Some((j0, j1))) =
            (Camera::pixel_range(lo[0], hi[0], cam.width), Camera::pixel_range(lo[1], hi[1], cam.height))
        else {
            continue;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                if tri.inside([i as f64 + 0.5, j as f64 + 0.5]) {
                    map.data[j * cam.width + i] = 1.0;
                }
            }
        }
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub face: usize,
    pub bary: [f64; 3],
}

/// Front-most triangle per pixel by z-buffer on screen-space interpolated depth.
pub fn coverage(vertices: &[Vec3], faces: &[[usize; 3]], cam: &Camera) -> Vec<Option<Coverage>> {
    let proj = project(vertices, cam);
    let mut out: Vec<Option<Coverage>> = vec![None; cam.pixels()];
    let mut depth = vec![f64::INFINITY; cam.pixels()];
    for (fi, f) in faces.iter().enumerate() {
        let Some(tri) = pixel_tri2(&proj, f) else { continue };
        let (lo, hi) = tri.bounds();
        let (Some((i0, i1)), Some((j0, j1))) =
            (Camera::pixel_range(lo[0], hi[0], cam.width), Camera::pixel_range(lo[1], hi[1], cam.height))
        else {
            continue;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                let q = [i as f64 + 0.5, j as f64 + 0.5];
                if !tri.inside(q) {
                    continue;
                }
                let Some(l) = tri.bary(q) else { continue };
                let z = l[0] * proj[f[0]].depth + l[1] * proj[f[1]].depth + l[2] * proj[f[2]].depth;
                let pix = j * cam.width + i;
                if z < depth[pix] {
                    depth[pix] = z;
                    out[pix] = Some(Coverage { face: fi, bary: l });
                }
            }
        }
    }
    out
}

fn check_topology(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("vertex sets differ in size: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Flow from frame t to t+1: barycentric interpolation of projected
/// per-vertex displacement over the front-most triangle at frame t.
pub fn render_flow(vt: &[Vec3], vt1: &[Vec3], faces: &[[usize; 3]], cam: &Camera) -> Result<FlowMap> {
    check_topology(vt, vt1)?;
    let p0 = project(vt, cam);
    let p1 = project(vt1, cam);
    let cov = coverage(vt, faces, cam);
    let mut map = FlowMap::invalid(cam.width, cam.height);
    for (pix, c) in cov.iter().enumerate() {
        let Some(c) = c else { continue };
        let f = faces[c.face];
        if f.iter().any(|&i| !p1[i].valid) {
            continue;
        }
        let mut flow = [0.0; 2];
        for (k, &vi) in f.iter().enumerate() {
            for d in 0..2 {
                flow[d] += c.bary[k] * (p1[vi].uv[d] - p0[vi].uv[d]);
            }
        }
        map.flow[pix] = flow;
        map.valid[pix] = true;
    }
    Ok(map)
}

/// Gradient of `Σ_p grad[p] · flow[p]` with respect to both vertex sets,
/// holding the visibility assignment fixed.
pub fn render_flow_backward(
    vt: &[Vec3],
    vt1: &[Vec3],
    faces: &[[usize; 3]],
    cam: &Camera,
    grad: &[[f64; 2]],
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    check_topology(vt, vt1)?;
    let p0 = project(vt, cam);
    let p1 = project(vt1, cam);
    let cov = coverage(vt, faces, cam);
    let mut g0 = vec![[0.0f64; 2]; vt.len()];
    let mut g1 = vec![[0.0f64; 2]; vt.len()];
    for (pix, c) in cov.iter().enumerate() {
        let Some(c) = c else { continue };
        let g = grad[pix];
        if g == [0.0, 0.0] {
            continue;
        }
        let f = faces[c.face];
        if f.iter().any(|&i| !p1[i].valid) {
            continue;
        }
        let q = [(pix % cam.width) as f64 + 0.5, (pix / cam.width) as f64 + 0.5];
        let [a, b, cc] = [p0[f[0]].uv, p0[f[1]].uv, p0[f[2]].uv];
        let mut mu = [0.0; 3];
        for (k, &vi) in f.iter().enumerate() {
            let delta = [p1[vi].uv[0] - p0[vi].uv[0], p1[vi].uv[1] - p0[vi].uv[1]];
            mu[k] = g[0] * delta[0] + g[1] * delta[1];
            for d in 0..2 {
                g1[vi][d] += c.bary[k] * g[d];
                g0[vi][d] -= c.bary[k] * g[d];
            }
        }
        // barycentrics λ_k = N_k / A as functions of the frame-t positions
        let area = cross2(a, b, cc);
        let ml: f64 = mu.iter().zip(&c.bary).map(|(m, l)| m * l).sum();
        let (na_b, na_c, _) = cross2_grads(b, cc, q);
        let (nb_c, nb_a, _) = cross2_grads(cc, a, q);
        let (nc_a, nc_b, _) = cross2_grads(a, b, q);
        let (aa, ab, ac) = cross2_grads(a, b, cc);
        let inv = 1.0 / area;
        for d in 0..2 {
            g0[f[0]][d] += inv * (mu[1] * nb_a[d] + mu[2] * nc_a[d] - ml * aa[d]);
            g0[f[1]][d] += inv * (mu[0] * na_b[d] + mu[2] * nc_b[d] - ml * ab[d]);
            g0[f[2]][d] += inv * (mu[0] * na_c[d] + mu[1] * nb_c[d] - ml * ac[d]);
        }
    }
    Ok((chain_projection(vt, &p0, cam, &g0, 1.0), chain_projection(vt1, &p1, cam, &g1, 1.0)))
}
