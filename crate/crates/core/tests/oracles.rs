//! Independent oracles and invariants across the pipeline.

mod common;

use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skelfit_core::energy::{chamfer, e_symm, householder_reflect, total_energy, EnergyWeights};
use skelfit_core::math::{Quat, Rigid, Vec3};
use skelfit_core::metrics::{joint_cd, miou, scale_search, skinning_distance, voxelize, VoxelGrid};
use skelfit_core::optim::{estimate_camera, fit, gradients, look_at, CameraSearchConfig, ClassSet, FitConfig};
use skelfit_core::render::{rasterize_hard, rasterize_soft, render_flow, Camera, FlowMap};
use skelfit_core::skeleton::{deform, forward_kinematics, skin_lbs, BoneTransform, BoneTransforms, DisplacementField};
use skelfit_core::synthetic::{
    ellipsoid, fit_scene, grad_scene, ramp_poses, random_tree, random_unit_quat, side_view, tube_creature,
};
use skelfit_core::workbench::{load_observations, synth_observations, ObservationSequence};
use skelfit_core::{FramePose, PoseSequence, ShapeParams, SkinnedMesh};

use common::{matrix_fk, random_shape, random_weights};

fn v3(v: Vector3<f64>) -> Vec3 {
    Vec3::new(v.x, v.y, v.z)
}

fn na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
    let one = |a: &[Vec3], b: &[Vec3]| {
        let mut sum = 0.0;
        for p in a {
            let mut best = f64::INFINITY;
            for q in b {
                best = best.min((*p - *q).norm_sq());
            }
            sum += best;
        }
        sum / a.len() as f64
    };
    one(a, b) + one(b, a)
}

fn brute_joint(a: &[Vec3], b: &[Vec3]) -> f64 {
    let one = |a: &[Vec3], b: &[Vec3]| {
        let mut sum = 0.0;
        for p in a {
            let mut best = f64::INFINITY;
            for q in b {
                best = best.min((*p - *q).norm_sq());
            }
            sum += best.sqrt();
        }
        sum / a.len() as f64
    };
    one(a, b) + one(b, a)
}

/// Cheapest assignment of every row to a distinct column (rows ≤ columns).
fn brute_assignment(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
    if row == cost.len() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for c in 0..used.len() {
        if !used[c] {
            used[c] = true;
            best = best.min(cost[row][c] + brute_assignment(cost, row + 1, used));
            used[c] = false;
        }
    }
    best
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn random_field(rng: &mut ChaCha8Rng, width: usize) -> DisplacementField {
    let mut f = DisplacementField::init(width, rng);
    for l in &mut f.layers {
        for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
            *w = rng.gen_range(-0.3..0.3);
        }
    }
    f
}

/// The four-layer field written as dense matrix products.
fn matrix_field(f: &DisplacementField, x: Vector3<f64>) -> Vector3<f64> {
    let mut h = DVector::from_column_slice(x.as_slice());
    for (i, l) in f.layers.iter().enumerate() {
        let w = DMatrix::from_row_slice(l.outputs, l.inputs, &l.weights);
        h = w * h + DVector::from_column_slice(&l.biases);
        if i + 1 < f.layers.len() {
            h = h.map(|v| v.max(0.0));
        }
    }
    Vector3::new(h[0], h[1], h[2])
}

fn box_mesh(lo: Vec3, hi: Vec3) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let v = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let f = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    (v, f)
}

#[test]
fn deform_matches_a_matrix_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..25 {
        let k = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=50);
        let shape = random_shape(&mut rng, k, n.max(3));
        let params = ShapeParams {
            scale: rng.gen_range(0.5..2.0),
            bone_scales: (0..k).map(|_| rng.gen_range(0.5..2.0)).collect(),
            displacement: random_field(&mut rng, 8),
            skin_logits: (0..shape.num_vertices() * k).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        };
        let pose = FramePose {
            root: Rigid::new(random_unit_quat(&mut rng), Vec3::new(rng.gen(), rng.gen(), rng.gen())),
            joints: (0..k).map(|_| random_unit_quat(&mut rng)).collect(),
        };
        let ours = deform(&shape, &params, &pose).unwrap();

        let u = params.scale;
        let rest = matrix_fk(&shape.tree, &vec![u; k], &vec![Quat::identity(); k], &Rigid::identity());
        let scales: Vec<f64> = params.bone_scales.iter().map(|s| s * u).collect();
        let posed = matrix_fk(&shape.tree, &scales, &pose.joints, &pose.root);
        let bones = shape.tree.bones();
        for (i, v) in shape.mesh.vertices.iter().enumerate() {
            let x = na(*v) * u;
            let x = x + matrix_field(&params.displacement, x);
            let logits = &params.skin_logits[i * k..(i + 1) * k];
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            let mut out = Vector3::zeros();
            for j in 0..k {
                let w = logits[j].exp() / z;
                let head = rest[j].fixed_view::<3, 1>(0, 3).into_owned();
                let axis = rest[j].fixed_view::<3, 1>(0, 2) * (u * bones[j].segment_length);
                let e = if axis.norm_squared() > 0.0 { ((x - head).dot(&axis) / axis.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
                let stretched = x + axis * (params.bone_scales[j] - 1.0) * e;
                let local = rest[j].try_inverse().unwrap() * stretched.push(1.0);
                out += (posed[j] * local).xyz() * w;
            }
            let d = (v3(out) - ours[i]).norm();
            assert!(d < 1e-9, "vertex {i}: {d:e}");
        }
    }
}

#[test]
fn hard_raster_matches_point_in_polygon() {
    let cam = Camera::new(70.0, 60.0, 30.5, 33.0, 64, 60).unwrap();
    let rot = Quat::from_axis_angle(Vec3::new(0.2, 0.3, 1.0), 0.6);
    let corners: Vec<Vec3> = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
        .iter()
        .map(|&(x, y)| rot.rotate(Vec3::new(x, y, 0.0)) + Vec3::new(0.1, -0.2, 2.5))
        .collect();
    let map = rasterize_hard(&corners, &[[0, 1, 2], [0, 2, 3]], &cam);
    let uv: Vec<(f64, f64)> = corners.iter().map(|p| (70.0 * p.x / p.z + 30.5, 60.0 * p.y / p.z + 33.0)).collect();
    let mut count = 0;
    for j in 0..60 {
        for i in 0..64 {
            let (px, py) = (i as f64 + 0.5, j as f64 + 0.5);
            let sides: Vec<f64> = (0..4)
                .map(|e| {
                    let (a, b) = (uv[e], uv[(e + 1) % 4]);
                    (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0)
                })
                .collect();
            let inside = sides.iter().all(|s| *s >= 0.0) || sides.iter().all(|s| *s <= 0.0);
            count += usize::from(inside);
            assert_eq!(map.get(i, j) == 1.0, inside, "pixel ({i}, {j})");
        }
    }
    assert_eq!(count, map.data.iter().filter(|v| **v == 1.0).count());
    assert!(count > 300);
}

#[test]
fn translated_flow_matches_the_projection_derivative() {
    let cam = Camera::centered(80.0, 48, 48).unwrap();
    let (v, f) = box_mesh(Vec3::new(-0.6, -0.6, 3.0), Vec3::new(0.6, 0.6, 3.0));
    let f: Vec<[usize; 3]> = f.into_iter().take(2).collect();
    let delta = 0.01;
    let moved: Vec<Vec3> = v.iter().map(|p| *p + Vec3::new(delta, 0.0, 0.0)).collect();
    let flow = render_flow(&v, &moved, &f, &cam).unwrap();
    let expected = 80.0 * delta / 3.0;
    let mut interior = 0;
    for j in 16..32 {
        for i in 16..32 {
            let p = j * 48 + i;
            assert!(flow.valid[p]);
            assert!((flow.flow[p][0] - expected).abs() < 1e-6 && flow.flow[p][1].abs() < 1e-6);
            interior += 1;
        }
    }
    assert_eq!(interior, 256);
    assert!(flow.valid.iter().zip(&flow.flow).all(|(ok, f)| *ok || *f == [0.0, 0.0]));
}

#[test]
fn chamfer_and_joint_distance_equal_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let (na_, nb) = (rng.gen_range(1..=20), rng.gen_range(1..=20));
        let (a, b) = (random_points(&mut rng, na_), random_points(&mut rng, nb));
        assert_eq!(chamfer(&a, &b).unwrap(), brute_chamfer(&a, &b));
        let (ja, jb) = (&a[..na_.min(10)], &b[..nb.min(10)]);
        assert_eq!(joint_cd(ja, jb).unwrap(), brute_joint(ja, jb));
    }
}

#[test]
fn skinning_distance_equals_permutation_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..60 {
        let k = rng.gen_range(1..=5);
        let sets = |rng: &mut ChaCha8Rng| -> Vec<Vec<Vec3>> {
            (0..k).map(|_| { let n = rng.gen_range(0..6); random_points(rng, n) }).collect()
        };
        let (a, b) = (sets(&mut rng), sets(&mut rng));
        let (fa, fb): (Vec<&Vec<Vec3>>, Vec<&Vec<Vec3>>) =
            (a.iter().filter(|s| !s.is_empty()).collect(), b.iter().filter(|s| !s.is_empty()).collect());
        let ours = skinning_distance(&a, &b);
        if fa.is_empty() || fb.is_empty() {
            assert!(ours.is_err());
            continue;
        }
        let (rows, cols) = if fa.len() <= fb.len() { (&fa, &fb) } else { (&fb, &fa) };
        let costs: Vec<Vec<f64>> = rows.iter().map(|x| cols.iter().map(|y| brute_chamfer(x, y)).collect()).collect();
        let best = brute_assignment(&costs, 0, &mut vec![false; cols.len()]) / rows.len() as f64;
        let ours = ours.unwrap();
        assert!((ours - best).abs() <= 1e-12 * best.max(1.0), "{ours} vs {best}");
    }
}

#[test]
fn half_overlapping_cubes_give_a_third() {
    let (a, fa) = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0));
    let (b, fb) = box_mesh(Vec3::new(0.5, 0.0, 0.0), Vec3::new(1.5, 1.0, 1.0));
    let (lo, hi) = (Vec3::new(-0.01, -0.01, -0.01), Vec3::new(1.51, 1.01, 1.01));
    let ga = voxelize(&a, &fa, lo, hi, [64; 3]).unwrap();
    let gb = voxelize(&b, &fb, lo, hi, [64; 3]).unwrap();
    let iou = miou(&ga, &gb).unwrap();
    assert!((iou - 1.0 / 3.0).abs() <= 1.0 / 64.0, "{iou}");
    // direct count of the voxel centers inside each cube
    let inside = |g: &VoxelGrid, x0: f64, x1: f64| {
        let mut n = 0;
        for k in 0..64 {
            for j in 0..64 {
                for i in 0..64 {
                    let c = [g.center(0, i), g.center(1, j), g.center(2, k)];
                    let yes = (x0..=x1).contains(&c[0]) && (0.0..=1.0).contains(&c[1]) && (0.0..=1.0).contains(&c[2]);
                    assert_eq!(g.get(i, j, k), yes);
                    n += usize::from(yes);
                }
            }
        }
        n
    };
    assert_eq!(inside(&ga, 0.0, 1.0), ga.count());
    assert_eq!(inside(&gb, 0.5, 1.5), gb.count());
}

#[test]
fn scale_search_recovers_a_known_factor() {
    let (v, f) = ellipsoid(Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.5, 0.3, 0.4), Quat::identity(), 12, 16);
    let lo = Vec3::new(-1.0, -1.0, -1.0);
    let hi = Vec3::new(1.0, 1.0, 1.0);
    let reference = voxelize(&v, &f, lo, hi, [48; 3]).unwrap();
    let (range, steps) = (2.0f64, 41);
    let step = range.powf(2.0 / (steps - 1) as f64);
    let (s, iou) = scale_search(&v, &f, &reference, range, steps).unwrap();
    assert!(s > 1.0 / step && s < step && iou == 1.0, "{s} {iou} step {step}");
    let doubled = skelfit_core::metrics::scale_about_center(&v, 2.0);
    let (s, _) = scale_search(&doubled, &f, &reference, range, steps).unwrap();
    assert!(s > 0.5 / step && s < 0.5 * step, "{s}");
    let (s, iou) = scale_search(&doubled, &f, &reference, range, 1).unwrap();
    let rescaled = skelfit_core::metrics::scale_about_center(&doubled, s);
    assert_eq!(iou, miou(&voxelize(&rescaled, &f, lo, hi, [48; 3]).unwrap(), &reference).unwrap());
}

fn breakdown_is_consistent(b: &skelfit_core::energy::EnergyBreakdown, w: &EnergyWeights) -> bool {
    let sum = w.w_mask * b.mask + w.w_flow * b.flow + w.w_smooth * b.smooth + w.w_symm * b.symm;
    (b.total - sum).abs() <= 1e-9 * sum.abs().max(1.0)
}

#[test]
fn energy_total_is_the_weighted_sum() {
    for seed in 0..4 {
        let sc = grad_scene(seed).unwrap();
        let w = EnergyWeights { w_mask: 3.0, w_flow: 5e2, w_smooth: 7.0, w_symm: 0.5, symmetry_normal: [0.0, 1.0, 0.0] };
        let e = total_energy(&sc.shape, &sc.params, &sc.poses, &sc.obs, &w, 1e-3).unwrap();
        assert!(breakdown_is_consistent(&e, &w));
        assert!(e.mask > 0.0 && e.flow > 0.0);
        let z = total_energy(&sc.shape, &sc.params, &sc.poses, &sc.obs, &EnergyWeights::zero(), 1e-3).unwrap();
        assert_eq!(z.total, 0.0);
    }
}

#[test]
fn gradients_are_deterministic_and_vanish_without_weights() {
    let sc = grad_scene(3).unwrap();
    let run = |w: &EnergyWeights| gradients(&sc.shape, &sc.params, &sc.poses, &sc.obs, w, 1e-3, ClassSet::ALL).unwrap();
    let w = EnergyWeights::default();
    let (e1, g1) = run(&w);
    let (e2, g2) = run(&w);
    assert_eq!(e1, e2);
    assert_eq!(g1, g2);
    let (_, g0) = run(&EnergyWeights::zero());
    assert!(g0.first_non_finite().is_none());
    assert_eq!(g0, g0.zeros_like());
}

/// A side-viewed tube and its static observations rendered in memory.
fn static_scene(config: &FitConfig) -> (skelfit_core::SkeletalShape, ObservationSequence) {
    let shape = tube_creature(3, 1.5, 0.25, 9, 8).unwrap();
    let root = side_view(1.5, 4.0);
    let cam = Camera::centered(60.0, 32, 32).unwrap();
    let v = deform(&shape, &ShapeParams::identity(&shape, config.field_width), &FramePose::with_root(root, 3)).unwrap();
    let mask = rasterize_soft(&v, &shape.mesh.faces, &cam, config.sigma);
    let flow = render_flow(&v, &v, &shape.mesh.faces, &cam).unwrap();
    let obs = ObservationSequence::new(vec![mask.clone(), mask], vec![flow], cam, Some(root)).unwrap();
    (shape, obs)
}

#[test]
fn fit_from_its_own_observations_stays_put() {
    let config = FitConfig { epochs_total: 10, epochs_stage1: 3, field_width: 8, ..Default::default() };
    let (shape, obs) = static_scene(&config);
    let r = fit(&shape, &obs, &config).unwrap();
    let first = r.initial_energy().unwrap();
    assert!(first.mask == 0.0 && first.flow == 0.0 && first.smooth == 0.0);
    assert!(first.total < 1e-20, "{first:?}");
    assert!((r.params.scale - 1.0).abs() <= 1e-6);
    assert!(r.params.bone_scales.iter().all(|s| (s - 1.0).abs() <= 1e-6));
    let start = ShapeParams::init(&shape, 8, &mut ChaCha8Rng::seed_from_u64(config.seed));
    for (a, b) in r.params.displacement.layers.iter().zip(&start.displacement.layers) {
        assert!(a.weights.iter().chain(&a.biases).zip(b.weights.iter().chain(&b.biases)).all(|(x, y)| (x - y).abs() <= 1e-6));
    }
    for f in &r.poses.frames {
        assert!((f.root.translation - obs.root.unwrap().translation).norm() <= 1e-6);
        assert!(f.joints.iter().all(|q| (q.w.abs() - 1.0).abs() <= 1e-6));
    }
}

#[test]
fn synthesized_flow_survives_the_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let shape = tube_creature(3, 1.5, 0.25, 9, 8).unwrap();
    let bend = Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), 0.25);
    let poses = ramp_poses(side_view(1.5, 4.0), &[Quat::identity(), bend, bend], 4);
    let cam = Camera::centered(60.0, 32, 32).unwrap();
    let params = ShapeParams::identity(&shape, 8);
    synth_observations(&shape, &params, &poses, &cam, dir.path()).unwrap();
    let obs = load_observations(dir.path()).unwrap();
    let w = EnergyWeights { w_mask: 0.0, w_flow: 1.0, w_smooth: 0.0, w_symm: 0.0, ..Default::default() };
    let e = total_energy(&shape, &params, &poses, &obs, &w, 1e-5).unwrap();
    assert!(e.flow < 1e-10, "{e:?}");
    assert!(obs.flows.iter().all(|f: &FlowMap| f.valid.iter().any(|v| *v)));
}

#[test]
fn seeded_fits_descend() {
    for seed in [1, 2] {
        let sc = fit_scene(seed, 15f64.to_radians()).unwrap();
        let cfg = FitConfig { seed, epochs_total: 40, epochs_stage1: 10, ..Default::default() };
        let r = fit(&sc.shape, &sc.obs, &cfg).unwrap();
        assert!(r.history.iter().all(|h| h.total.is_finite()));
        assert!(r.final_energy.total <= r.initial_energy().unwrap().total);
    }
}

#[test]
fn camera_search_keeps_the_true_view() {
    let shape = tube_creature(3, 1.5, 0.25, 9, 8).unwrap();
    let rest = deform(&shape, &ShapeParams::identity(&shape, 8), &FramePose::rest(3)).unwrap();
    let center = Vec3::new(0.0, 0.0, 0.75);
    let eye = center + Vec3::new(4.0, 0.5, 0.3);
    let cam = Camera::centered(40.0, 24, 24).unwrap();
    let search = CameraSearchConfig { candidates: 12, top_k: 3, radius: Some((eye - center).norm()), ..Default::default() };
    let view = look_at(eye, center);
    let posed: Vec<Vec3> = rest.iter().map(|p| view.apply(*p)).collect();
    let masks = vec![rasterize_soft(&posed, &shape.mesh.faces, &cam, search.sigma)];
    let run = || estimate_camera(&rest, &shape.mesh.faces, &masks, &cam, &search, &[eye], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let est = run();
    assert!(est.loss <= est.round1_loss);
    assert!(est.loss <= 1e-12, "{}", est.loss);
    assert_eq!(est, run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn root_translation_shifts_every_head(seed in any::<u64>(), t in prop::array::uniform3(-5.0f64..5.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=8);
        let tree = random_tree(&mut rng, k);
        let q = vec![Quat::identity(); k];
        let t = Vec3::from_array(t);
        let a = forward_kinematics(&tree, &vec![1.0; k], &q, &Rigid::identity()).unwrap();
        let b = forward_kinematics(&tree, &vec![1.0; k], &q, &Rigid::new(Quat::identity(), t)).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            prop_assert!((y.head - x.head - t).norm() < 1e-12);
        }
    }

    #[test]
    fn shared_transform_is_rigid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, n) = (rng.gen_range(1..=5), rng.gen_range(1..=30));
        let verts = random_points(&mut rng, n);
        let mesh = SkinnedMesh::new(verts.clone(), vec![], random_weights(&mut rng, n, k), k).unwrap();
        let q = random_unit_quat(&mut rng);
        let t = Vec3::new(rng.gen(), rng.gen(), rng.gen());
        let bt = BoneTransform::from_rigid(&Rigid::new(q, t));
        let out = skin_lbs(&mesh, &BoneTransforms(vec![bt; k])).unwrap();
        for (v, o) in verts.iter().zip(&out) {
            prop_assert!((q.rotate(*v) + t - *o).norm() < 1e-12);
        }
    }

    #[test]
    fn reflection_is_an_involution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(&mut rng, 20);
        let n = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.1..1.0));
        let twice = householder_reflect(&householder_reflect(&pts, n).unwrap(), n).unwrap();
        for (p, q) in pts.iter().zip(&twice) {
            prop_assert!((*p - *q).norm() < 1e-12);
        }
    }

    #[test]
    fn symmetry_ignores_in_plane_translation(seed in any::<u64>(), dy in -3.0f64..3.0, dz in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(&mut rng, 15);
        let n = Vec3::new(1.0, 0.0, 0.0);
        let moved: Vec<Vec3> = pts.iter().map(|p| *p + Vec3::new(0.0, dy, dz)).collect();
        let (a, b) = (e_symm(&pts, n).unwrap(), e_symm(&moved, n).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn chamfer_is_symmetric_and_zero_on_itself(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (na_, nb) = (rng.gen_range(1..=20), rng.gen_range(1..=20));
        let (a, b) = (random_points(&mut rng, na_), random_points(&mut rng, nb));
        prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        prop_assert!((chamfer(&a, &b).unwrap() - chamfer(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rendering_ignores_the_field_when_it_is_zero(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=4);
        let shape = random_shape(&mut rng, k, 20);
        let id = ShapeParams::identity(&shape, 8);
        let inited = ShapeParams::init(&shape, 8, &mut rng);
        let pose = FramePose {
            root: Rigid::new(random_unit_quat(&mut rng), Vec3::zeros()),
            joints: (0..k).map(|_| random_unit_quat(&mut rng)).collect(),
        };
        prop_assert_eq!(deform(&shape, &id, &pose).unwrap(), deform(&shape, &inited, &pose).unwrap());
    }
}

#[test]
fn pose_sequence_rejects_mismatched_frames() {
    let k = 2;
    let frames = vec![FramePose::rest(k), FramePose::rest(k + 1)];
    assert!(PoseSequence::new(frames, k).is_err());
}
