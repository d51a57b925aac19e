use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use skelfit_core::metrics::{evaluate, EvalConfig, EvalInput, DEFAULT_SCALE_RANGE, DEFAULT_SCALE_STEPS, REPORT_HEADER};
use skelfit_core::optim::gradcheck::{gradcheck, GradcheckConfig};
use skelfit_core::optim::{fit, FitConfig};
use skelfit_core::reanimate::{retarget, RetargetConfig};
use skelfit_core::retrieval::{nearest, EmbeddingIndex};
use skelfit_core::skeleton::deform;
use skelfit_core::workbench::{
    load_camera, load_embeddings, load_json, load_observations, load_points, load_poses, load_shape, save_obj, save_shape,
    synth_observations,
};
use skelfit_core::{Error, PoseSequence};

/// Environment variable that overrides the fitting seed.
const SEED_VAR: &str = "CASA_SEED";

#[derive(Parser)]
#[command(name = "skelfit", version, about = "Fit, reanimate and score stretchable-bone skeletal shapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank template shapes by embedding distance to a query.
    Retrieve {
        /// Manifest of indexed items.
        #[arg(long)]
        index: PathBuf,
        /// Embedding file with one vector per query frame.
        #[arg(long)]
        query: PathBuf,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
    /// Fit a template shape to an observation directory.
    Fit {
        #[arg(long)]
        shape: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pose a fitted shape to match a target point set.
    Reanimate {
        #[arg(long)]
        shape: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predicted shape against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Rescale the prediction to its best IoU first.
        #[arg(long)]
        scale_search: bool,
    },
    /// Render masks and flows of a posed shape.
    Synth {
        #[arg(long)]
        shape: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit 1 for bad input, 2 for a failed computation or write.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

/// Output errors are runtime failures whatever their kind.
fn writing<T>(r: skelfit_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Runtime(e.to_string()))
}

fn invalid(msg: impl Display) -> Failure {
    Failure::Validation(msg.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Validation(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Retrieve { index, query, k } => cmd_retrieve(&index, &query, k),
        Command::Fit { shape, obs, config, out } => cmd_fit(&shape, &obs, &config, &out),
        Command::Reanimate { shape, target, out } => cmd_reanimate(&shape, &target, &out),
        Command::Eval { pred, gt, scale_search } => cmd_eval(&pred, &gt, scale_search),
        Command::Synth { shape, poses, camera, out } => cmd_synth(&shape, &poses, &camera, &out),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
    }
}

fn cmd_retrieve(index: &Path, query: &Path, k: usize) -> Result<(), Failure> {
    if k == 0 {
        return Err(invalid("-k must be at least 1"));
    }
    let index = EmbeddingIndex::from_manifest(index)?;
    let (_, query) = load_embeddings(query)?;
    println!("rank,id,score");
    for (rank, (id, score)) in nearest(&index, &query, k)?.into_iter().enumerate() {
        println!("{},{id},{score}", rank + 1);
    }
    Ok(())
}

fn seed_override() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| invalid(format!("{SEED_VAR} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// `<dir>/<stem>.history.csv` next to the fitted shape.
fn history_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "fit".into());
    out.with_file_name(format!("{stem}.history.csv"))
}

fn cmd_fit(shape: &Path, obs: &Path, config: &Path, out: &Path) -> Result<(), Failure> {
    let loaded = load_shape(shape)?;
    let obs = load_observations(obs)?;
    let mut cfg: FitConfig = load_json(config)?;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let result = fit(&loaded.shape, &obs, &cfg)?;
    if let Some(msg) = &result.aborted {
        eprintln!("warning: stopped early, non-finite {msg}");
    }
    writing(save_shape(out, &loaded.shape, Some(&result.params), Some(&result.poses)))?;
    let mut csv = String::from("epoch,total,mask,flow,smooth,symm\n");
    for (e, h) in result.history.iter().enumerate() {
        csv.push_str(&format!("{e},{},{},{},{},{}\n", h.total, h.mask, h.flow, h.smooth, h.symm));
    }
    let hist = history_path(out);
    fs::write(&hist, csv).map_err(|e| Failure::Runtime(format!("i/o error on {}: {e}", hist.display())))?;
    let initial = result.initial_energy().map_or(f64::NAN, |e| e.total);
    eprintln!("energy {initial} -> {} over {} epochs", result.final_energy.total, result.history.len());
    Ok(())
}

fn cmd_reanimate(shape: &Path, target: &Path, out: &Path) -> Result<(), Failure> {
    let loaded = load_shape(shape)?;
    let target = load_points(target)?;
    let params = loaded.params_or_identity();
    let r = retarget(&loaded.shape, &params, &target, &loaded.first_pose(), &RetargetConfig::default())?;
    if r.diverged {
        eprintln!("warning: descent hit a non-finite value, keeping the best pose");
    }
    let poses = PoseSequence { frames: vec![r.pose.clone()] };
    writing(save_shape(out, &loaded.shape, Some(&params), Some(&poses)))?;
    let vertices = deform(&loaded.shape, &params, &r.pose)?;
    writing(save_obj(&out.with_extension("obj"), &vertices, &loaded.shape.mesh.faces))?;
    eprintln!("chamfer {} -> {} in {} iterations", r.initial_chamfer, r.chamfer, r.iterations);
    Ok(())
}

fn cmd_eval(pred: &Path, gt: &Path, scale_search: bool) -> Result<(), Failure> {
    let pred = load_shape(pred)?;
    let gt = load_shape(gt)?;
    let (pp, gp) = (pred.params_or_identity(), gt.params_or_identity());
    let (pq, gq) = (pred.first_pose(), gt.first_pose());
    let cfg = EvalConfig {
        scale_search: scale_search.then_some((DEFAULT_SCALE_RANGE, DEFAULT_SCALE_STEPS)),
        ..Default::default()
    };
    let report = evaluate(
        &EvalInput { shape: &pred.shape, params: &pp, pose: &pq },
        &EvalInput { shape: &gt.shape, params: &gp, pose: &gq },
        &cfg,
    )?;
    println!("{REPORT_HEADER}");
    println!("{}", report.csv_row());
    Ok(())
}

fn cmd_synth(shape: &Path, poses: &Path, camera: &Path, out: &Path) -> Result<(), Failure> {
    let loaded = load_shape(shape)?;
    let poses = load_poses(poses, loaded.shape.num_bones())?;
    let (camera, _) = load_camera(camera)?;
    writing(fs::create_dir_all(out).map_err(|e| Error::Runtime(format!("cannot create {}: {e}", out.display()))))?;
    let params = loaded.params_or_identity();
    let obs = synth_observations(&loaded.shape, &params, &poses, &camera, out).map_err(|e| match e {
        Error::Io { .. } => Failure::Runtime(e.to_string()),
        e => e.into(),
    })?;
    eprintln!("wrote {} frames to {}", obs.len(), out.display());
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> Result<(), Failure> {
    let cfg = GradcheckConfig::default();
    let report = gradcheck(seed, &cfg)?;
    println!("term,class,checked,skipped,failures,worst,status");
    for s in report.summary() {
        let status = if s.passed(&cfg) { "ok" } else { "FAIL" };
        println!("{},{},{},{},{},{:e},{status}", s.term.name(), s.class.name(), s.checked, s.skipped, s.failures, s.worst);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(invalid(format!("{} gradient blocks disagree with finite differences", report.failing().len())))
    }
}
