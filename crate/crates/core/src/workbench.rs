//! On-disk formats and the synthetic-observation writer.
//!
//! * shapes, poses, cameras and configs are JSON documents;
//! * masks are binary PGM (`P5`, maxval 255);
//! * flows are Middlebury `.flo` (magic 202021.25, little-endian), with
//!   unknown pixels stored as `1e10`;
//! * embeddings are `EMB1` files: magic, `u32` dimension, `u32` count,
//!   then `count × dimension` little-endian `f32` values.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Quat, Rigid, Vec3};
use crate::render::{rasterize_hard, render_flow, Camera, FlowMap, SilhouetteMap};
use crate::skeleton::{
    logits_from_weights, Bone, DisplacementField, FramePose, KinematicTree, PoseSequence, ShapeParams, SkeletalShape,
    SkinnedMesh, DEFAULT_HIDDEN_WIDTH,
};

pub const SHAPE_SCHEMA_VERSION: u32 = 1;
pub const FLO_MAGIC: f32 = 202021.25;
pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
/// Middlebury convention: components above this magnitude are unknown.
const FLO_UNKNOWN: f32 = 1e10;
const FLO_UNKNOWN_THRESH: f32 = 1e9;

/// Per-frame masks, flows to the next frame (one fewer than masks) and the
/// camera. `root` is the object-to-camera placement when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub masks: Vec<SilhouetteMap>,
    pub flows: Vec<FlowMap>,
    pub camera: Camera,
    pub root: Option<Rigid>,
    /// Recorded RGB frame paths; never decoded.
    pub rgb: Vec<PathBuf>,
}

impl ObservationSequence {
    pub fn new(masks: Vec<SilhouetteMap>, flows: Vec<FlowMap>, camera: Camera, root: Option<Rigid>) -> Result<Self> {
        let obs = ObservationSequence { masks, flows, camera, root, rgb: Vec::new() };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.masks.is_empty() {
            return Err(Error::invalid("observation sequence has no frames"));
        }
        if self.flows.len() + 1 != self.masks.len() {
            return Err(Error::dim(format!("{} flows for {} frames", self.flows.len(), self.masks.len())));
        }
        let (w, h) = (self.camera.width, self.camera.height);
        for (t, m) in self.masks.iter().enumerate() {
            if (m.width, m.height) != (w, h) {
                return Err(Error::dim(format!("mask {t} is {}×{}, camera is {w}×{h}", m.width, m.height)));
            }
        }
        for (t, f) in self.flows.iter().enumerate() {
            if (f.width, f.height) != (w, h) {
                return Err(Error::dim(format!("flow {t} is {}×{}, camera is {w}×{h}", f.width, f.height)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    write(path, s.as_bytes())
}

// ---------------------------------------------------------------- shapes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidJson {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl From<&Rigid> for RigidJson {
    fn from(r: &Rigid) -> Self {
        RigidJson { rotation: r.rotation.to_array(), translation: r.translation.to_array() }
    }
}

impl From<&RigidJson> for Rigid {
    fn from(r: &RigidJson) -> Self {
        Rigid::new(Quat::from_array(r.rotation), Vec3::from_array(r.translation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameJson {
    pub root: RigidJson,
    pub joints: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub frames: Vec<FrameJson>,
}

impl PoseFile {
    pub fn from_poses(p: &PoseSequence) -> Self {
        PoseFile {
            frames: p
                .frames
                .iter()
                .map(|f| FrameJson { root: (&f.root).into(), joints: f.joints.iter().map(|q| q.to_array()).collect() })
                .collect(),
        }
    }

    pub fn to_poses(&self, bones: usize) -> Result<PoseSequence> {
        PoseSequence::new(
            self.frames
                .iter()
                .map(|f| FramePose { root: (&f.root).into(), joints: f.joints.iter().map(|q| Quat::from_array(*q)).collect() })
                .collect(),
            bones,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFile {
    pub schema_version: u32,
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub parents: Vec<Option<usize>>,
    pub offset_lengths: Vec<f64>,
    pub segment_lengths: Vec<f64>,
    pub rest_rotations: Vec<[f64; 4]>,
    pub skinning: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bone_scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<DisplacementField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skin_logits: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poses: Option<Vec<FrameJson>>,
}

/// A shape with whatever fitted parameters and poses were stored alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedShape {
    pub shape: SkeletalShape,
    pub params: Option<ShapeParams>,
    pub poses: Option<PoseSequence>,
}

impl LoadedShape {
    /// Stored parameters, or the template-reproducing defaults.
    pub fn params_or_identity(&self) -> ShapeParams {
        self.params.clone().unwrap_or_else(|| ShapeParams::identity(&self.shape, DEFAULT_HIDDEN_WIDTH))
    }

    pub fn first_pose(&self) -> FramePose {
        self.poses
            .as_ref()
            .and_then(|p| p.frames.first().cloned())
            .unwrap_or_else(|| FramePose::rest(self.shape.num_bones()))
    }
}

impl ShapeFile {
    pub fn from_parts(shape: &SkeletalShape, params: Option<&ShapeParams>, poses: Option<&PoseSequence>) -> Self {
        let k = shape.num_bones();
        let bones = shape.tree.bones();
        ShapeFile {
            schema_version: SHAPE_SCHEMA_VERSION,
            vertices: shape.mesh.vertices.iter().map(|v| v.to_array()).collect(),
            faces: shape.mesh.faces.clone(),
            parents: bones.iter().map(|b| b.parent).collect(),
            offset_lengths: bones.iter().map(|b| b.offset_length).collect(),
            segment_lengths: bones.iter().map(|b| b.segment_length).collect(),
            rest_rotations: bones.iter().map(|b| b.rest_rotation.to_array()).collect(),
            skinning: shape.mesh.skinning.chunks(k).map(|r| r.to_vec()).collect(),
            scale: params.map(|p| p.scale),
            bone_scales: params.map(|p| p.bone_scales.clone()),
            displacement: params.map(|p| p.displacement.clone()),
            skin_logits: params.map(|p| p.skin_logits.chunks(k).map(|r| r.to_vec()).collect()),
            poses: poses.map(|p| PoseFile::from_poses(p).frames),
        }
    }

    pub fn into_loaded(self) -> Result<LoadedShape> {
        if self.schema_version != SHAPE_SCHEMA_VERSION {
            return Err(Error::invariant(
                "schema_version",
                format!("unsupported version {} (expected {SHAPE_SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let k = self.parents.len();
        for (name, len) in [
            ("offset_lengths", self.offset_lengths.len()),
            ("segment_lengths", self.segment_lengths.len()),
            ("rest_rotations", self.rest_rotations.len()),
        ] {
            if len != k {
                return Err(Error::invariant(name, format!("has {len} entries, expected {k} (one per bone)")));
            }
        }
        let bones = (0..k)
            .map(|i| Bone {
                parent: self.parents[i],
                offset_length: self.offset_lengths[i],
                segment_length: self.segment_lengths[i],
                rest_rotation: Quat::from_array(self.rest_rotations[i]),
            })
            .collect();
        let tree = KinematicTree::new(bones)?;
        if self.skinning.len() != self.vertices.len() {
            return Err(Error::invariant("skinning", "needs one row per vertex"));
        }
        if let Some(i) = self.skinning.iter().position(|r| r.len() != k) {
            return Err(Error::invariant(format!("skinning[{i}]"), format!("row must have {k} entries")));
        }
        let mesh = SkinnedMesh::new(
            self.vertices.iter().map(|v| Vec3::from_array(*v)).collect(),
            self.faces.clone(),
            self.skinning.concat(),
            k,
        )?;
        let shape = SkeletalShape::new(tree, mesh)?;
        let has_params =
            self.scale.is_some() || self.bone_scales.is_some() || self.displacement.is_some() || self.skin_logits.is_some();
        let params = if has_params {
            let skin_logits = match &self.skin_logits {
                Some(rows) => {
                    if rows.len() != shape.num_vertices() || rows.iter().any(|r| r.len() != k) {
                        return Err(Error::invariant("skin_logits", "must be N×K"));
                    }
                    rows.concat()
                }
                None => logits_from_weights(&shape.mesh.skinning),
            };
            let p = ShapeParams {
                scale: self.scale.unwrap_or(1.0),
                bone_scales: self.bone_scales.clone().unwrap_or_else(|| vec![1.0; k]),
                displacement: self.displacement.clone().unwrap_or_else(|| DisplacementField::zeros(DEFAULT_HIDDEN_WIDTH)),
                skin_logits,
            };
            p.validate(&shape)?;
            Some(p)
        } else {
            None
        };
        let poses = match &self.poses {
            Some(frames) => Some(PoseFile { frames: frames.clone() }.to_poses(k)?),
            None => None,
        };
        Ok(LoadedShape { shape, params, poses })
    }
}

pub fn load_shape(path: &Path) -> Result<LoadedShape> {
    let file: ShapeFile = read_json(path)?;
    file.into_loaded()
}

pub fn save_shape(
    path: &Path,
    shape: &SkeletalShape,
    params: Option<&ShapeParams>,
    poses: Option<&PoseSequence>,
) -> Result<()> {
    write_json(path, &ShapeFile::from_parts(shape, params, poses))
}

pub fn load_poses(path: &Path, bones: usize) -> Result<PoseSequence> {
    let file: PoseFile = read_json(path)?;
    file.to_poses(bones)
}

pub fn save_poses(path: &Path, poses: &PoseSequence) -> Result<()> {
    write_json(path, &PoseFile::from_poses(poses))
}

// ---------------------------------------------------------------- camera

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    #[serde(flatten)]
    pub intrinsics: Camera,
    /// Object-to-camera transform, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrinsic: Option<RigidJson>,
}

pub fn load_camera(path: &Path) -> Result<(Camera, Option<Rigid>)> {
    let file: CameraFile = read_json(path)?;
    file.intrinsics.validate()?;
    Ok((file.intrinsics, file.extrinsic.as_ref().map(Rigid::from)))
}

pub fn save_camera(path: &Path, cam: &Camera, extrinsic: Option<&Rigid>) -> Result<()> {
    write_json(path, &CameraFile { intrinsics: *cam, extrinsic: extrinsic.map(RigidJson::from) })
}

// ---------------------------------------------------------------- PGM

pub fn encode_pgm(map: &SilhouetteMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.extend(map.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<SilhouetteMap> {
    let err = |m: &str| Error::format(path, m);
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated PGM header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("non-ASCII PGM header"))?.to_string());
    }
    if tokens[0] != "P5" {
        return Err(err("not a binary PGM (expected P5)"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| err("bad PGM header number"));
    let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return Err(err("PGM maxval must be 255"));
    }
    if w == 0 || h == 0 {
        return Err(err("PGM has zero size"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let data = bytes.get(pos..pos + w * h).ok_or_else(|| err("PGM raster is truncated"))?;
    Ok(SilhouetteMap { width: w, height: h, data: data.iter().map(|b| *b as f64 / 255.0).collect() })
}

// ---------------------------------------------------------------- FLO

pub fn encode_flo(map: &FlowMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * map.flow.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(map.width as i32).to_le_bytes());
    out.extend_from_slice(&(map.height as i32).to_le_bytes());
    for (f, ok) in map.flow.iter().zip(&map.valid) {
        let (u, v) = if *ok { (f[0] as f32, f[1] as f32) } else { (FLO_UNKNOWN, FLO_UNKNOWN) };
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowMap> {
    let err = |m: &str| Error::format(path, m);
    if bytes.len() < 12 {
        return Err(err("truncated .flo header"));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(err(&format!("bad .flo magic {magic} (expected {FLO_MAGIC})")));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(err("non-positive .flo dimensions"));
    }
    let (w, h) = (w as usize, h as usize);
    if bytes.len() != 12 + 8 * w * h {
        return Err(err("unexpected .flo payload size"));
    }
    let mut map = FlowMap::invalid(w, h);
    for p in 0..w * h {
        let u = f32::from_le_bytes(word(12 + 8 * p));
        let v = f32::from_le_bytes(word(16 + 8 * p));
        if u.abs() > FLO_UNKNOWN_THRESH || v.abs() > FLO_UNKNOWN_THRESH || !u.is_finite() || !v.is_finite() {
            continue;
        }
        map.flow[p] = [u as f64, v as f64];
        map.valid[p] = true;
    }
    Ok(map)
}

/// The flow map as it will read back from disk.
pub fn quantize_flow(map: &FlowMap) -> FlowMap {
    let mut out = map.clone();
    for (f, ok) in out.flow.iter_mut().zip(&map.valid) {
        *f = if *ok { [f[0] as f32 as f64, f[1] as f32 as f64] } else { [0.0, 0.0] };
    }
    out
}

// ---------------------------------------------------------------- embeddings

pub fn encode_embeddings(dim: usize, vectors: &[Vec<f64>]) -> Result<Vec<u8>> {
    if let Some(i) = vectors.iter().position(|v| v.len() != dim) {
        return Err(Error::dim(format!("vector {i} has length {}, expected {dim}", vectors[i].len())));
    }
    let mut out = Vec::with_capacity(12 + 4 * dim * vectors.len());
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    for v in vectors {
        for x in v {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// `(dimension, vectors)` from an `EMB1` payload.
pub fn decode_embeddings(bytes: &[u8], path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let err = |m: &str| Error::format(path, m);
    if bytes.len() < 12 || &bytes[0..4] != EMB_MAGIC {
        return Err(err("missing EMB1 magic"));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let dim = u32::from_le_bytes(word(4)) as usize;
    let count = u32::from_le_bytes(word(8)) as usize;
    if bytes.len() != 12 + 4 * dim * count {
        return Err(err("unexpected EMB1 payload size"));
    }
    let vectors = (0..count)
        .map(|v| (0..dim).map(|d| f32::from_le_bytes(word(12 + 4 * (v * dim + d))) as f64).collect())
        .collect();
    Ok((dim, vectors))
}

pub fn load_embeddings(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    decode_embeddings(&read(path)?, path)
}

pub fn save_embeddings(path: &Path, dim: usize, vectors: &[Vec<f64>]) -> Result<()> {
    write(path, &encode_embeddings(dim, vectors)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub embedding: PathBuf,
    pub shape: PathBuf,
}

/// Item id → files; relative paths resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<BTreeMap<String, ManifestEntry>> {
    let mut m: BTreeMap<String, ManifestEntry> = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in m.values_mut() {
        if e.embedding.is_relative() {
            e.embedding = base.join(&e.embedding);
        }
        if e.shape.is_relative() {
            e.shape = base.join(&e.shape);
        }
    }
    Ok(m)
}

pub fn save_manifest(path: &Path, manifest: &BTreeMap<String, ManifestEntry>) -> Result<()> {
    write_json(path, manifest)
}

// ---------------------------------------------------------------- observations

pub fn mask_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("mask_{t:04}.pgm"))
}

pub fn flow_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("flow_{t:04}.flo"))
}

/// Reads `mask_%04d.pgm`, `flow_%04d.flo` and `camera.json` from `dir`.
pub fn load_observations(dir: &Path) -> Result<ObservationSequence> {
    let (camera, root) = load_camera(&dir.join("camera.json"))?;
    let mut masks = Vec::new();
    while mask_path(dir, masks.len()).exists() {
        let p = mask_path(dir, masks.len());
        masks.push(decode_pgm(&read(&p)?, &p)?);
    }
    if masks.is_empty() {
        return Err(Error::invalid(format!("no mask_0000.pgm in {}", dir.display())));
    }
    let mut flows = Vec::new();
    for t in 0..masks.len() - 1 {
        let p = flow_path(dir, t);
        if !p.exists() {
            return Err(Error::invalid(format!("missing frame file {}", p.display())));
        }
        flows.push(decode_flo(&read(&p)?, &p)?);
    }
    let mut rgb = Vec::new();
    for t in 0..masks.len() {
        let p = dir.join(format!("rgb_{t:04}.png"));
        if p.exists() {
            rgb.push(p);
        }
    }
    let obs = ObservationSequence { masks, flows, camera, root, rgb };
    obs.validate()?;
    Ok(obs)
}

pub fn save_observations(dir: &Path, obs: &ObservationSequence) -> Result<()> {
    obs.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, m) in obs.masks.iter().enumerate() {
        write(&mask_path(dir, t), &encode_pgm(m))?;
    }
    for (t, f) in obs.flows.iter().enumerate() {
        write(&flow_path(dir, t), &encode_flo(f))?;
    }
    save_camera(&dir.join("camera.json"), &obs.camera, obs.root.as_ref())
}

/// Hard masks and exact flows of a posed shape, in the form they read back from disk.
pub fn render_observations(
    shape: &SkeletalShape,
    params: &ShapeParams,
    poses: &PoseSequence,
    camera: &Camera,
) -> Result<ObservationSequence> {
    camera.validate()?;
    let frames = crate::energy::deform_sequence(shape, params, poses)?;
    let faces = &shape.mesh.faces;
    let masks = frames.iter().map(|v| rasterize_hard(v, faces, camera)).collect();
    let flows = frames
        .windows(2)
        .map(|w| render_flow(&w[0], &w[1], faces, camera).map(|f| quantize_flow(&f)))
        .collect::<Result<_>>()?;
    ObservationSequence::new(masks, flows, *camera, poses.frames.first().map(|f| f.root))
}

/// Renders and writes an observation directory; returns what was written.
pub fn synth_observations(
    shape: &SkeletalShape,
    params: &ShapeParams,
    poses: &PoseSequence,
    camera: &Camera,
    out_dir: &Path,
) -> Result<ObservationSequence> {
    let obs = render_observations(shape, params, poses, camera)?;
    save_observations(out_dir, &obs)?;
    Ok(obs)
}

// ---------------------------------------------------------------- points and meshes

/// Whitespace-separated `x y z` rows; `#` starts a comment.
pub fn parse_points(text: &str, path: &Path) -> Result<Vec<Vec3>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, format!("line {}: not a number", n + 1)))?;
        if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(path, format!("line {}: expected three finite coordinates", n + 1)));
        }
        out.push(Vec3::new(vals[0], vals[1], vals[2]));
    }
    Ok(out)
}

pub fn load_points(path: &Path) -> Result<Vec<Vec3>> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8 text"))?;
    parse_points(&text, path)
}

pub fn save_points(path: &Path, points: &[Vec3]) -> Result<()> {
    let mut s = String::new();
    for p in points {
        s.push_str(&format!("{:?} {:?} {:?}\n", p.x, p.y, p.z));
    }
    write(path, s.as_bytes())
}

/// Wavefront OBJ with vertices and triangles.
pub fn save_obj(path: &Path, vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    for v in vertices {
        buf.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in faces {
        buf.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parses any JSON document from disk with the crate's error type.
pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}
