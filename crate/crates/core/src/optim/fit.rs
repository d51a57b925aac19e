//! The two-stage fitting schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamParams};
use super::camera::{estimate_camera, CameraSearchConfig};
use super::grad::{gradients, ClassSet};
use super::{VarBlocks, VarClass};
use crate::energy::{total_energy, EnergyBreakdown, EnergyWeights, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::math::Rigid;
use crate::render::{rasterize_soft, Camera, SilhouetteMap};
use crate::skeleton::{
    canonical_vertices, deform, FramePose, PoseSequence, ShapeParams, SkeletalShape, DEFAULT_HIDDEN_WIDTH,
};
use crate::workbench::ObservationSequence;

/// Smallest value a scale may take after an update.
const MIN_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub epochs_total: usize,
    pub epochs_stage1: usize,
    pub stage1_scale: f64,
    pub stage2_default: f64,
    pub stage2_scale_and_field: f64,
    pub weights: EnergyWeights,
    pub adam: AdamParams,
    pub sigma: f64,
    pub seed: u64,
    pub field_width: usize,
    /// Initialize the scale from silhouette bounding boxes before stage 1.
    pub bbox_init: bool,
    pub camera_search: CameraSearchConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epochs_total: 200,
            epochs_stage1: 60,
            stage1_scale: 5e-2,
            stage2_default: 4e-3,
            stage2_scale_and_field: 1e-3,
            weights: EnergyWeights::default(),
            adam: AdamParams::default(),
            sigma: DEFAULT_SIGMA,
            seed: 0,
            field_width: DEFAULT_HIDDEN_WIDTH,
            bbox_init: true,
            camera_search: CameraSearchConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_stage1 > self.epochs_total {
            return Err(Error::invariant("epochs_stage1", "must not exceed epochs_total"));
        }
        for (name, r) in [
            ("stage1_scale", self.stage1_scale),
            ("stage2_default", self.stage2_default),
            ("stage2_scale_and_field", self.stage2_scale_and_field),
            ("sigma", self.sigma),
        ] {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::invariant(name, "must be positive and finite"));
            }
        }
        if self.field_width == 0 {
            return Err(Error::invariant("field_width", "must be at least 1"));
        }
        self.weights.validate()?;
        self.adam.validate()?;
        self.camera_search.validate()
    }

    fn rate(&self, stage1: bool, c: VarClass) -> f64 {
        match (stage1, c) {
            (true, _) => self.stage1_scale,
            (false, VarClass::Scale | VarClass::Field) => self.stage2_scale_and_field,
            (false, _) => self.stage2_default,
        }
    }
}

/// Geometric mean of the per-axis extent ratios `observed / rendered`.
/// Boxes are inclusive pixel boxes `(i_min, j_min, i_max, j_max)`.
pub fn init_scale(
    rendered: Option<(usize, usize, usize, usize)>,
    observed: Option<(usize, usize, usize, usize)>,
) -> Result<f64> {
    let observed = observed.ok_or_else(|| Error::invalid("scale initialization needs a nonempty observed mask"))?;
    let rendered = rendered.ok_or_else(|| Error::invalid("template silhouette is empty; cannot initialize the scale"))?;
    let extent = |b: (usize, usize, usize, usize)| ((b.2 - b.0 + 1) as f64, (b.3 - b.1 + 1) as f64);
    let (ow, oh) = extent(observed);
    let (rw, rh) = extent(rendered);
    Ok(((ow / rw) * (oh / rh)).sqrt())
}

fn union_box(maps: &[SilhouetteMap]) -> Option<(usize, usize, usize, usize)> {
    maps.iter().filter_map(|m| m.bbox(0.5)).reduce(|a, b| (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)))
}

/// Everything the schedule mutates.
#[derive(Debug, Clone)]
pub struct FitState {
    pub params: ShapeParams,
    pub poses: PoseSequence,
    pub m: VarBlocks,
    pub v: VarBlocks,
    /// Per-class Adam step counters.
    pub steps: [u64; 6],
    pub epoch: usize,
    pub history: Vec<EnergyBreakdown>,
    pub root_fixed: bool,
}

impl FitState {
    /// Initial state: seeded field, template rig, identity joints and
    /// `root` on every frame, optionally rescaled by bounding boxes.
    pub fn new(
        shape: &SkeletalShape,
        obs: &ObservationSequence,
        config: &FitConfig,
        root: Rigid,
        root_fixed: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut params = ShapeParams::init(shape, config.field_width, rng);
        let k = shape.num_bones();
        let poses = PoseSequence { frames: vec![FramePose::with_root(root, k); obs.len()] };
        if config.bbox_init {
            let rendered: Vec<SilhouetteMap> = poses
                .frames
                .iter()
                .map(|f| deform(shape, &params, f).map(|v| rasterize_soft(&v, &shape.mesh.faces, &obs.camera, config.sigma)))
                .collect::<Result<_>>()?;
            params.scale = init_scale(union_box(&rendered), union_box(&obs.masks))?;
        }
        let vars = VarBlocks::pack(&params, &poses);
        Ok(FitState {
            params,
            poses,
            m: vars.zeros_like(),
            v: vars.zeros_like(),
            steps: [0; 6],
            epoch: 0,
            history: Vec::new(),
            root_fixed,
        })
    }

    fn classes(&self, stage1: bool) -> ClassSet {
        if stage1 {
            ClassSet::only(VarClass::Scale)
        } else if self.root_fixed {
            ClassSet::ALL.without(VarClass::Root)
        } else {
            ClassSet::ALL
        }
    }

    /// One epoch: evaluate, record, update. Returns the energy at the
    /// start of the epoch under the full weights.
    pub fn step(&mut self, shape: &SkeletalShape, obs: &ObservationSequence, config: &FitConfig) -> Result<EnergyBreakdown> {
        let stage1 = self.epoch < config.epochs_stage1;
        let classes = self.classes(stage1);
        let gw = if stage1 { EnergyWeights::mask_only(config.weights.w_mask) } else { config.weights };
        let (terms, grads) = gradients(shape, &self.params, &self.poses, obs, &gw, config.sigma, classes)?;
        let energy = EnergyBreakdown::from_terms(terms.mask, terms.flow, terms.smooth, terms.symm, &config.weights);
        if let Some(term) = energy.non_finite_term() {
            return Err(Error::NonFinite(format!("energy term `{term}`")));
        }
        let mut vars = VarBlocks::pack(&self.params, &self.poses);
        for c in VarClass::ALL {
            if !classes.contains(c) {
                continue;
            }
            self.steps[c.index()] += 1;
            let (x, g) = (vars.get_mut(c), grads.get(c));
            adam_step(
                x,
                g,
                self.m.get_mut(c),
                self.v.get_mut(c),
                config.rate(stage1, c),
                &config.adam,
                self.steps[c.index()],
            )?;
        }
        vars.unpack(&mut self.params, &mut self.poses)?;
        self.poses.normalize();
        self.params.scale = self.params.scale.max(MIN_SCALE);
        self.params.bone_scales.iter_mut().for_each(|b| *b = b.max(MIN_SCALE));
        self.history.push(energy);
        self.epoch += 1;
        Ok(energy)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Lowest-energy state visited.
    pub params: ShapeParams,
    pub poses: PoseSequence,
    pub camera: Camera,
    /// Energy at the start of each completed epoch.
    pub history: Vec<EnergyBreakdown>,
    pub final_energy: EnergyBreakdown,
    pub root_fixed: bool,
    /// Set when a non-finite energy stopped the schedule early.
    pub aborted: Option<String>,
}

impl FitResult {
    pub fn initial_energy(&self) -> Option<EnergyBreakdown> {
        self.history.first().copied()
    }
}

/// Fits the template to the observations. With a known object placement
/// (`obs.root`) the root is initialized from it and optimized in stage 2;
/// otherwise the camera is estimated first and the root stays fixed.
pub fn fit(shape: &SkeletalShape, obs: &ObservationSequence, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    obs.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut obs = obs.clone();
    let (root, root_fixed) = match obs.root {
        Some(r) => (r, false),
        None => {
            let rest = canonical_vertices(shape, &ShapeParams::identity(shape, config.field_width));
            let est = estimate_camera(&rest, &shape.mesh.faces, &obs.masks, &obs.camera, &config.camera_search, &[], &mut rng)?;
            obs.camera = est.camera;
            (est.root, true)
        }
    };
    let mut state = FitState::new(shape, &obs, config, root, root_fixed, &mut rng)?;
    let mut best: Option<(f64, ShapeParams, PoseSequence)> = None;
    let mut aborted = None;
    for _ in 0..config.epochs_total {
        let snapshot = (state.params.clone(), state.poses.clone());
        match state.step(shape, &obs, config) {
            Ok(e) => {
                if best.as_ref().map_or(true, |b| e.total < b.0) {
                    best = Some((e.total, snapshot.0, snapshot.1));
                }
            }
            Err(Error::NonFinite(msg)) => {
                aborted = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let last = total_energy(shape, &state.params, &state.poses, &obs, &config.weights, config.sigma);
    let (params, poses, final_energy) = match (last, best) {
        (Ok(e), b) if e.is_finite() && b.as_ref().map_or(true, |b| e.total <= b.0) => (state.params, state.poses, e),
        (_, Some((_, p, q))) => {
            let e = total_energy(shape, &p, &q, &obs, &config.weights, config.sigma)?;
            (p, q, e)
        }
        (Ok(e), None) => (state.params, state.poses, e),
        (Err(e), None) => return Err(e),
    };
    Ok(FitResult { params, poses, camera: obs.camera, history: state.history, final_energy, root_fixed, aborted })
}
