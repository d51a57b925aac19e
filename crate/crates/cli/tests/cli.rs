use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skelfit_core::energy::chamfer;
use skelfit_core::math::{Quat, Vec3};
use skelfit_core::render::Camera;
use skelfit_core::skeleton::deform;
use skelfit_core::synthetic::{ramp_poses, side_view, tube_creature};
use skelfit_core::workbench::{
    load_shape, save_camera, save_embeddings, save_manifest, save_points, save_poses, save_shape, ManifestEntry,
};
use skelfit_core::{FramePose, ShapeParams, SkeletalShape};

fn skelfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skelfit")).args(args).env_remove("CASA_SEED").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    shape: SkeletalShape,
}

impl Fixture {
    fn new(frames: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let shape = tube_creature(3, 1.5, 0.25, 7, 8).unwrap();
        let bend = Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), 0.2);
        let poses = ramp_poses(side_view(1.5, 4.0), &[Quat::identity(), bend, bend], frames);
        save_shape(&root.join("shape.json"), &shape, None, None).unwrap();
        save_poses(&root.join("poses.json"), &poses).unwrap();
        save_camera(&root.join("camera.json"), &Camera::centered(60.0, 32, 32).unwrap(), None).unwrap();
        Fixture { _dir: dir, root, shape }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn synth(&self, out: &str) -> Output {
        skelfit(&[
            "synth",
            "--shape",
            s(&self.path("shape.json")),
            "--poses",
            s(&self.path("poses.json")),
            "--camera",
            s(&self.path("camera.json")),
            "--out",
            s(&self.path(out)),
        ])
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&skelfit(&["--help"])), 0);
    assert_eq!(code(&skelfit(&["--version"])), 0);
    assert_eq!(code(&skelfit(&["fit", "--help"])), 0);
}

#[test]
fn unknown_flag_prints_usage() {
    let o = skelfit(&["eval", "--bogus"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&skelfit(&[])), 1);
}

#[test]
fn missing_or_invalid_input_is_a_validation_error() {
    let f = Fixture::new(2);
    let o = skelfit(&["eval", "--pred", "/no/such/file.json", "--gt", s(&f.path("shape.json"))]);
    assert_eq!(code(&o), 1);
    fs::write(f.path("bad.json"), "{\"schema_version\": 1}").unwrap();
    let o = skelfit(&["eval", "--pred", s(&f.path("bad.json")), "--gt", s(&f.path("shape.json"))]);
    assert_eq!(code(&o), 1);
    let o = Command::new(env!("CARGO_BIN_EXE_skelfit"))
        .args(["fit", "--shape", s(&f.path("shape.json")), "--obs", s(&f.root), "--config", s(&f.path("camera.json"))])
        .args(["--out", s(&f.path("fit.json"))])
        .env("CASA_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let f = Fixture::new(2);
    let rest = deform(&f.shape, &ShapeParams::identity(&f.shape, 8), &FramePose::rest(3)).unwrap();
    save_points(&f.path("target.xyz"), &rest).unwrap();
    let o = skelfit(&[
        "reanimate",
        "--shape",
        s(&f.path("shape.json")),
        "--target",
        s(&f.path("target.xyz")),
        "--out",
        s(&f.path("missing/dir/out.json")),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_is_deterministic() {
    let f = Fixture::new(3);
    assert_eq!(code(&f.synth("a")), 0);
    assert_eq!(code(&f.synth("b")), 0);
    let mut names: Vec<_> = fs::read_dir(f.path("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let expected = ["camera.json", "flow_0000.flo", "flow_0001.flo", "mask_0000.pgm", "mask_0001.pgm", "mask_0002.pgm"];
    assert_eq!(names, expected.map(std::ffi::OsString::from));
    for n in names {
        assert_eq!(fs::read(f.path("a").join(&n)).unwrap(), fs::read(f.path("b").join(&n)).unwrap());
    }
}

#[test]
fn fit_writes_shape_and_history() {
    let f = Fixture::new(3);
    assert_eq!(code(&f.synth("obs")), 0);
    fs::write(f.path("config.json"), r#"{"epochs_total": 12, "epochs_stage1": 4, "field_width": 8}"#).unwrap();
    let o = skelfit(&[
        "fit",
        "--shape",
        s(&f.path("shape.json")),
        "--obs",
        s(&f.path("obs")),
        "--config",
        s(&f.path("config.json")),
        "--out",
        s(&f.path("fitted.json")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fitted = load_shape(&f.path("fitted.json")).unwrap();
    assert_eq!(fitted.poses.as_ref().unwrap().len(), 3);
    assert!(fitted.params.is_some());
    let hist = fs::read_to_string(f.path("fitted.history.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("epoch,total,mask,flow,smooth,symm"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().enumerate().all(|(e, r)| r[0] == e as f64 && r.len() == 6));
    // "energy <initial> -> <final> over N epochs"
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().find(|l| l.starts_with("energy ")).unwrap();
    let parts: Vec<&str> = line.split_whitespace().collect();
    let (initial, last): (f64, f64) = (parts[1].parse().unwrap(), parts[3].parse().unwrap());
    assert!(last <= initial, "{last} > {initial}");
    assert_eq!(initial, rows[0][1]);
}

#[test]
fn fit_seed_env_is_reproducible() {
    let f = Fixture::new(2);
    assert_eq!(code(&f.synth("obs")), 0);
    fs::write(f.path("config.json"), r#"{"epochs_total": 3, "epochs_stage1": 1, "field_width": 8}"#).unwrap();
    let run = |out: &str, seed: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_skelfit"))
            .args(["fit", "--shape", s(&f.path("shape.json")), "--obs", s(&f.path("obs"))])
            .args(["--config", s(&f.path("config.json")), "--out", s(&f.path(out))])
            .env("CASA_SEED", seed)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        fs::read(f.path(out)).unwrap()
    };
    assert_eq!(run("a.json", "7"), run("b.json", "7"));
    assert_ne!(run("a.json", "7"), run("c.json", "8"));
}

#[test]
fn reanimate_recovers_a_pose() {
    let f = Fixture::new(2);
    let params = ShapeParams::identity(&f.shape, 8);
    let mut pose = FramePose::rest(3);
    pose.joints[1] = Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), 0.3);
    let target = deform(&f.shape, &params, &pose).unwrap();
    save_points(&f.path("target.xyz"), &target).unwrap();
    let o = skelfit(&[
        "reanimate",
        "--shape",
        s(&f.path("shape.json")),
        "--target",
        s(&f.path("target.xyz")),
        "--out",
        s(&f.path("posed.json")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let posed = load_shape(&f.path("posed.json")).unwrap();
    let v = deform(&posed.shape, posed.params.as_ref().unwrap(), &posed.first_pose()).unwrap();
    let initial = chamfer(&deform(&f.shape, &params, &FramePose::rest(3)).unwrap(), &target).unwrap();
    assert!(chamfer(&v, &target).unwrap() < 0.05 * initial);
    let obj = fs::read_to_string(f.path("posed.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), f.shape.num_vertices());
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), f.shape.mesh.faces.len());
}

#[test]
fn eval_of_identical_shapes() {
    let f = Fixture::new(2);
    let p = s(&f.path("shape.json")).to_string();
    for extra in [&[][..], &["--scale-search"][..]] {
        let mut args = vec!["eval", "--pred", &p, "--gt", &p];
        args.extend_from_slice(extra);
        let o = skelfit(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let out = String::from_utf8(o.stdout).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "miou,mcham,joint,skinning,reanim");
        let row: Vec<f64> = lines[1].split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(row, vec![1.0, 0.0, 0.0, 0.0, 0.0], "{extra:?}");
    }
}

#[test]
fn retrieve_ranks_items() {
    let f = Fixture::new(2);
    let mut manifest = BTreeMap::new();
    for (id, v) in [("fox", vec![0.0, 1.0]), ("cat", vec![3.0, 0.0]), ("owl", vec![0.0, -2.0])] {
        save_embeddings(&f.path(&format!("{id}.emb")), 2, &[v]).unwrap();
        manifest.insert(
            id.to_string(),
            ManifestEntry { embedding: format!("{id}.emb").into(), shape: "shape.json".into() },
        );
    }
    save_manifest(&f.path("index.json"), &manifest).unwrap();
    save_embeddings(&f.path("query.emb"), 2, &[vec![0.0, 1.0], vec![5.0, 5.0]]).unwrap();
    let o = skelfit(&["retrieve", "--index", s(&f.path("index.json")), "--query", s(&f.path("query.emb")), "-k", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "rank,id,score\n1,fox,0\n2,owl,9\n");
    save_embeddings(&f.path("wide.emb"), 3, &[vec![0.0, 1.0, 2.0]]).unwrap();
    let o = skelfit(&["retrieve", "--index", s(&f.path("index.json")), "--query", s(&f.path("wide.emb"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gradcheck_passes_on_a_fresh_build() {
    let o = skelfit(&["gradcheck", "--seed", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().next(), Some("term,class,checked,skipped,failures,worst,status"));
    assert_eq!(out.lines().count(), 1 + 4 * 6);
}
