//! Shape-comparison metrics: volumetric IoU, vertex and joint Chamfer,
//! skinning distance under optimal bone matching, and reanimation error.

use rayon::prelude::*;

use crate::energy::chamfer;
use crate::error::{Error, Result};
use crate::math::{bounding_box, Vec3};
use crate::reanimate::{retarget, RetargetConfig};
use crate::skeleton::{FramePose, ShapeParams, SkeletalShape};

pub const DEFAULT_RESOLUTION: usize = 64;
/// Padding of the default voxel bounds, as a fraction of each extent.
pub const DEFAULT_PADDING: f64 = 0.05;
/// Default scale search: 41 scales within a factor of 2 of the box ratio.
pub const DEFAULT_SCALE_RANGE: f64 = 2.0;
pub const DEFAULT_SCALE_STEPS: usize = 41;

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub resolution: [usize; 3],
    pub min: Vec3,
    pub max: Vec3,
    /// Occupancy, x fastest then y then z.
    pub cells: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(min: Vec3, max: Vec3, resolution: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if resolution[a] == 0 {
                return Err(Error::invariant(format!("resolution[{a}]"), "must be at least 1"));
            }
            if !(min.get(a) < max.get(a)) || !min.get(a).is_finite() || !max.get(a).is_finite() {
                return Err(Error::invariant(format!("bounds[{a}]"), "min must be below max and finite"));
            }
        }
        let n = resolution.iter().product();
        Ok(VoxelGrid { resolution, min, max, cells: vec![false; n] })
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.cells[self.index(i, j, k)]
    }

    pub fn cell_size(&self, axis: usize) -> f64 {
        (self.max.get(axis) - self.min.get(axis)) / self.resolution[axis] as f64
    }

    pub fn center(&self, axis: usize, i: usize) -> f64 {
        self.min.get(axis) + (i as f64 + 0.5) * self.cell_size(axis)
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Box spanned by the occupied cells.
    pub fn occupied_bounds(&self) -> Option<(Vec3, Vec3)> {
        let [nx, ny, nz] = self.resolution;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if self.get(i, j, k) {
                        any = true;
                        for (a, c) in [i, j, k].into_iter().enumerate() {
                            lo[a] = lo[a].min(c);
                            hi[a] = hi[a].max(c);
                        }
                    }
                }
            }
        }
        if !any {
            return None;
        }
        let corner = |a: usize, c: usize| self.min.get(a) + c as f64 * self.cell_size(a);
        Some((
            Vec3::new(corner(0, lo[0]), corner(1, lo[1]), corner(2, lo[2])),
            Vec3::new(corner(0, hi[0] + 1), corner(1, hi[1] + 1), corner(2, hi[2] + 1)),
        ))
    }

    fn same_grid(&self, o: &VoxelGrid) -> bool {
        self.resolution == o.resolution && self.min == o.min && self.max == o.max
    }
}

/// Union bounding box of the point sets, padded by `DEFAULT_PADDING` of
/// its extent on every side.
pub fn default_bounds(sets: &[&[Vec3]]) -> Result<(Vec3, Vec3)> {
    let all: Vec<Vec3> = sets.iter().flat_map(|s| s.iter().copied()).collect();
    let (lo, hi) = bounding_box(&all).ok_or_else(|| Error::invalid("cannot bound an empty point set"))?;
    let ext = hi - lo;
    let pad = |e: f64| if e > 0.0 { e * DEFAULT_PADDING } else { DEFAULT_PADDING };
    let p = Vec3::new(pad(ext.x), pad(ext.y), pad(ext.z));
    Ok((lo - p, hi + p))
}

/// Crossing of the line through `(s, t)` parallel to axis `a` with a
/// triangle, as the coordinate along `a`. Points on shared edges are owned
/// by exactly one of the two triangles, so closed meshes give consistent
/// parities.
fn crossing(p: [[f64; 3]; 3], a: usize, s: f64, t: f64) -> Option<f64> {
    let (b, c) = ((a + 1) % 3, (a + 2) % 3);
    let mut q = [[p[0][b], p[0][c]], [p[1][b], p[1][c]], [p[2][b], p[2][c]]];
    let mut depth = [p[0][a], p[1][a], p[2][a]];
    let area = (q[1][0] - q[0][0]) * (q[2][1] - q[0][1]) - (q[1][1] - q[0][1]) * (q[2][0] - q[0][0]);
    if area == 0.0 {
        return None;
    }
    if area < 0.0 {
        q.swap(1, 2);
        depth.swap(1, 2);
    }
    let mut w = [0.0; 3];
    for e in 0..3 {
        let (u, v) = (q[(e + 1) % 3], q[(e + 2) % 3]);
        let (dx, dy) = (v[0] - u[0], v[1] - u[1]);
        let f = dx * (t - u[1]) - dy * (s - u[0]);
        let owned = dy < 0.0 || (dy == 0.0 && dx > 0.0);
        if f < 0.0 || (f == 0.0 && !owned) {
            return None;
        }
        w[e] = f;
    }
    let total = w[0] + w[1] + w[2];
    Some((w[0] * depth[0] + w[1] * depth[1] + w[2] * depth[2]) / total)
}

/// Occupancy by majority vote of the crossing parities of three rays cast
/// from each cell center along +x, +y and +z.
pub fn voxelize(vertices: &[Vec3], faces: &[[usize; 3]], min: Vec3, max: Vec3, resolution: [usize; 3]) -> Result<VoxelGrid> {
    let mut grid = VoxelGrid::empty(min, max, resolution)?;
    if let Some(f) = faces.iter().position(|f| f.iter().any(|&i| i >= vertices.len())) {
        return Err(Error::invariant(format!("faces[{f}]"), "vertex index out of range"));
    }
    let tris: Vec<[[f64; 3]; 3]> = faces.iter().map(|f| f.map(|i| vertices[i].to_array())).collect();
    let mut votes = vec![0u8; grid.cells.len()];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let lines: Vec<(usize, usize)> =
            (0..resolution[c]).flat_map(|jc| (0..resolution[b]).map(move |jb| (jb, jc))).collect();
        let hits: Vec<Vec<f64>> = lines
            .par_iter()
            .map(|&(jb, jc)| {
                let (s, t) = (grid.center(b, jb), grid.center(c, jc));
                let mut xs: Vec<f64> = tris.iter().filter_map(|tr| crossing(*tr, a, s, t)).collect();
                xs.sort_by(f64::total_cmp);
                xs
            })
            .collect();
        for (&(jb, jc), xs) in lines.iter().zip(&hits) {
            for ja in 0..resolution[a] {
                let x = grid.center(a, ja);
                let ahead = xs.len() - xs.partition_point(|&h| h <= x);
                if ahead % 2 == 1 {
                    let mut ijk = [0; 3];
                    ijk[a] = ja;
                    ijk[b] = jb;
                    ijk[c] = jc;
                    votes[grid.index(ijk[0], ijk[1], ijk[2])] += 1;
                }
            }
        }
    }
    grid.cells.iter_mut().zip(&votes).for_each(|(c, &v)| *c = v >= 2);
    Ok(grid)
}

/// Intersection over union of two grids on the same lattice; two empty
/// grids count as identical.
pub fn miou(pred: &VoxelGrid, reference: &VoxelGrid) -> Result<f64> {
    if !pred.same_grid(reference) {
        return Err(Error::dim("voxel grids differ in bounds or resolution"));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.cells.iter().zip(&reference.cells) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Squared vertex Chamfer, the same quantity the fitting energy uses.
pub fn mean_chamfer(pred: &[Vec3], reference: &[Vec3]) -> Result<f64> {
    chamfer(pred, reference)
}

fn mean_nn_dist(from: &[Vec3], to: &[Vec3]) -> f64 {
    let sum: f64 = from.iter().map(|p| to.iter().map(|q| p.dist_sq(q)).fold(f64::INFINITY, f64::min).sqrt()).sum();
    sum / from.len() as f64
}

/// Symmetric Chamfer between joint sets with unsquared distances.
pub fn joint_cd(pred: &[Vec3], reference: &[Vec3]) -> Result<f64> {
    if pred.is_empty() || reference.is_empty() {
        return Err(Error::invalid("joint distance needs two nonempty joint sets"));
    }
    Ok(mean_nn_dist(pred, reference) + mean_nn_dist(reference, pred))
}

/// Minimum-cost assignment of size `min(rows, cols)` by shortest augmenting
/// paths with dual potentials. Returns the matched `(row, col)` pairs in
/// row order and the total cost.
pub fn lap_solve(cost: &[Vec<f64>]) -> Result<(Vec<(usize, usize)>, f64)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if let Some(r) = cost.iter().position(|row| row.len() != cols) {
        return Err(Error::dim(format!("cost row {r} has {} entries, expected {cols}", cost[r].len())));
    }
    for (r, row) in cost.iter().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::invariant(format!("cost[{r}][{c}]"), "non-finite entry"));
        }
    }
    if rows == 0 || cols == 0 {
        return Ok((Vec::new(), 0.0));
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| cost[r][c]).collect()).collect();
        let (pairs, total) = lap_solve(&t)?;
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return Ok((pairs, total));
    }
    // 1-based with a virtual column 0 holding the row being inserted
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m).filter(|&j| owner[j] != 0).map(|j| (owner[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
    Ok((pairs, total))
}

/// Vertices grouped by their highest-weight bone (lowest index on ties).
pub fn bone_vertex_sets(vertices: &[Vec3], weights: &[f64], bones: usize) -> Result<Vec<Vec<Vec3>>> {
    if bones == 0 || weights.len() != vertices.len() * bones {
        return Err(Error::dim(format!("{} weights for {} vertices and {bones} bones", weights.len(), vertices.len())));
    }
    let mut sets = vec![Vec::new(); bones];
    for (v, row) in vertices.iter().zip(weights.chunks_exact(bones)) {
        let best = (0..bones).fold(0, |b, k| if row[k] > row[b] { k } else { b });
        sets[best].push(*v);
    }
    Ok(sets)
}

/// Mean Chamfer between matched bone vertex sets under the optimal
/// one-to-one bone matching. Bones without vertices take no part.
pub fn skinning_distance(pred: &[Vec<Vec3>], reference: &[Vec<Vec3>]) -> Result<f64> {
    let a: Vec<&Vec<Vec3>> = pred.iter().filter(|s| !s.is_empty()).collect();
    let b: Vec<&Vec<Vec3>> = reference.iter().filter(|s| !s.is_empty()).collect();
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("skinning distance needs at least one bone with associated vertices on each side"));
    }
    let cost: Vec<Vec<f64>> =
        a.par_iter().map(|p| b.iter().map(|q| chamfer(p, q)).collect::<Result<Vec<f64>>>()).collect::<Result<_>>()?;
    let (pairs, total) = lap_solve(&cost)?;
    Ok(total / pairs.len() as f64)
}

fn diagonal(lo: Vec3, hi: Vec3) -> f64 {
    (hi - lo).norm()
}

/// Scales `points` about the center of their bounding box.
pub fn scale_about_center(points: &[Vec3], s: f64) -> Vec<Vec3> {
    match bounding_box(points) {
        Some((lo, hi)) => {
            let c = (lo + hi) * 0.5;
            points.iter().map(|p| c + (*p - c) * s).collect()
        }
        None => Vec::new(),
    }
}

/// Line search over `steps` geometrically spaced scales in
/// `[r / range, r · range]`, where `r` is the ratio of the occupied
/// diagonals of the reference and the unscaled prediction in the
/// reference grid. Scaling is about the prediction's box center. Returns
/// the first scale reaching the best IoU.
pub fn scale_search(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    reference: &VoxelGrid,
    range: f64,
    steps: usize,
) -> Result<(f64, f64)> {
    if steps == 0 {
        return Err(Error::invalid("scale search needs at least one step"));
    }
    if !(range >= 1.0) || !range.is_finite() {
        return Err(Error::invalid("scale search range must be a finite factor of at least 1"));
    }
    let (lo, hi) = bounding_box(vertices).ok_or_else(|| Error::invalid("prediction has no vertices"))?;
    let unscaled = voxelize(vertices, faces, reference.min, reference.max, reference.resolution)?;
    let pred_diag = unscaled.occupied_bounds().map_or(diagonal(lo, hi), |(a, b)| diagonal(a, b));
    let base = match reference.occupied_bounds() {
        Some((a, b)) if pred_diag > 0.0 => diagonal(a, b) / pred_diag,
        _ => 1.0,
    };
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for i in 0..steps {
        let e = if steps == 1 { 0.0 } else { 2.0 * i as f64 / (steps - 1) as f64 - 1.0 };
        let s = base * range.powf(e);
        let grid = if s == 1.0 {
            unscaled.clone()
        } else {
            voxelize(&scale_about_center(vertices, s), faces, reference.min, reference.max, reference.resolution)?
        };
        let iou = miou(&grid, reference)?;
        if iou > best.1 {
            best = (s, iou);
        }
    }
    Ok(best)
}

/// Final Chamfer after retargeting the fitted rig from its rest pose to
/// `target`.
pub fn reanimation_error(shape: &SkeletalShape, params: &ShapeParams, target: &[Vec3], config: &RetargetConfig) -> Result<f64> {
    Ok(retarget(shape, params, target, &FramePose::rest(shape.num_bones()), config)?.chamfer)
}

/// CSV header of [`MetricReport`] rows. `mcham` is squared, `joint` unsquared.
pub const REPORT_HEADER: &str = "miou,mcham,joint,skinning,reanim";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub miou: f64,
    pub mcham: f64,
    pub joint_cd: f64,
    pub skinning_dist: f64,
    pub reanimation_err: f64,
}

impl MetricReport {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.miou, self.mcham, self.joint_cd, self.skinning_dist, self.reanimation_err)
    }
}

/// A posed rig to be scored.
#[derive(Debug, Clone)]
pub struct EvalInput<'a> {
    pub shape: &'a SkeletalShape,
    pub params: &'a ShapeParams,
    pub pose: &'a FramePose,
}

impl EvalInput<'_> {
    fn vertices(&self) -> Result<Vec<Vec3>> {
        crate::skeleton::deform(self.shape, self.params, self.pose)
    }

    fn joints(&self) -> Result<Vec<Vec3>> {
        crate::skeleton::posed_joints(self.shape, self.params, self.pose)
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub resolution: usize,
    /// `Some((range, steps))` enables the IoU scale search.
    pub scale_search: Option<(f64, usize)>,
    pub retarget: RetargetConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { resolution: DEFAULT_RESOLUTION, scale_search: None, retarget: RetargetConfig::default() }
    }
}

/// Scores `pred` against `gt`. With a scale search, the best IoU scale is
/// applied to the prediction about its box center for the surface and
/// joint metrics, and to its global scale for reanimation.
pub fn evaluate(pred: &EvalInput, gt: &EvalInput, config: &EvalConfig) -> Result<MetricReport> {
    let mut pv = pred.vertices()?;
    let mut pj = pred.joints()?;
    let gv = gt.vertices()?;
    let gj = gt.joints()?;
    let res = [config.resolution; 3];
    let (lo, hi) = default_bounds(&[&pv, &gv])?;
    let reference = voxelize(&gv, &gt.shape.mesh.faces, lo, hi, res)?;
    let mut params = pred.params.clone();
    let iou = match config.scale_search {
        Some((range, steps)) => {
            let (s, iou) = scale_search(&pv, &pred.shape.mesh.faces, &reference, range, steps)?;
            if s != 1.0 {
                let c = bounding_box(&pv).map(|(a, b)| (a + b) * 0.5).unwrap_or_else(Vec3::zeros);
                pv = pv.iter().map(|p| c + (*p - c) * s).collect();
                pj = pj.iter().map(|p| c + (*p - c) * s).collect();
                params.scale *= s;
            }
            iou
        }
        None => miou(&voxelize(&pv, &pred.shape.mesh.faces, lo, hi, res)?, &reference)?,
    };
    let pk = pred.shape.num_bones();
    let gk = gt.shape.num_bones();
    let skin = skinning_distance(
        &bone_vertex_sets(&pv, &params.skin_weights(pk), pk)?,
        &bone_vertex_sets(&gv, &gt.params.skin_weights(gk), gk)?,
    )?;
    Ok(MetricReport {
        miou: iou,
        mcham: mean_chamfer(&pv, &gv)?,
        joint_cd: joint_cd(&pj, &gj)?,
        skinning_dist: skin,
        reanimation_err: reanimation_error(pred.shape, &params, &gv, &config.retarget)?,
    })
}
