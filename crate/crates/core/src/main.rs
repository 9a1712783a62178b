use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use basecal::baseline::{make_pairs, solve_ax_xb, PairOptions};
use basecal::calibrate::{calibrate_scan, fuse_with, CalibrationMode, FuseOptions};
use basecal::cloud::{load_cloud, load_obj};
use basecal::harness::{compare_with_baseline, run_simulation_study, CompareSpec, ExperimentSpec, RobotModel};
use basecal::kinematics::JointConfig;
use basecal::registration::{PreparedReference, RegistrationParams, UnitHint};
use basecal::scansim::{generate_dataset, write_dataset, DatasetParams, NoiseSpec};
use basecal::Transform;

#[derive(Parser)]
#[command(name = "basecal", version, about = "Hand-eye calibration from a scan of the robot base")]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a labeled registration dataset.
    GenDataset(GenDatasetArgs),
    /// Register one scan against a base model.
    Register(RegisterArgs),
    /// Calibrate from a directory of base scans.
    Calibrate(CalibrateArgs),
    /// Classical AX = XB from flange poses and target observations.
    Baseline(BaselineArgs),
    /// Run a poses × scans simulation study.
    Simulate(SimulateArgs),
    /// Compare single-scan calibration with AX = XB on a simulated robot.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenDatasetArgs {
    /// Chain file (.json or .urdf); the built-in robot when omitted.
    #[arg(long)]
    robot: Option<PathBuf>,
    /// Base mesh (.obj); defaults to the chain's reference.
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7")]
    radii: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    views: usize,
    #[arg(long, default_value_t = 4)]
    configs: usize,
    #[arg(long, default_value_t = 0.3)]
    noise_mm: f64,
    /// Add this many randomly transformed copies of every sample.
    #[arg(long)]
    augment: Option<usize>,
}

#[derive(Args)]
struct RegisterArgs {
    /// Scan in the camera frame (.ply or .xyz).
    #[arg(long)]
    scan: PathBuf,
    /// Base model (.obj, .ply or .xyz).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "auto")]
    unit: UnitHint,
    /// Registration parameters as JSON; missing fields take defaults.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value = "eye-in-hand")]
    mode: CalibrationMode,
    /// Directory of scans. Eye-in-hand scans need a sidecar `<stem>.json`
    /// holding `joints` (radians) or a `flange` pose.
    #[arg(long)]
    scans: PathBuf,
    /// Chain file, required for sidecars that give joint angles.
    #[arg(long)]
    robot: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "auto")]
    unit: UnitHint,
    /// Average per pose first when sidecars carry a `pose` index.
    #[arg(long)]
    per_pose_mean: bool,
    /// Drop scans whose registration was rejected instead of failing.
    #[arg(long)]
    skip_rejected: bool,
}

#[derive(Args)]
struct BaselineArgs {
    /// JSON list of flange → base poses.
    #[arg(long)]
    poses: PathBuf,
    /// JSON list of target → camera observations, one per pose.
    #[arg(long)]
    observations: PathBuf,
    /// Use every pose pair instead of consecutive ones.
    #[arg(long)]
    all_pairs: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment spec as JSON; missing fields take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    poses: Option<usize>,
    #[arg(long)]
    scans: Option<usize>,
    #[arg(long)]
    noise_mm: Option<f64>,
    /// Also write gnuplot data files and script to the output directory.
    #[arg(long)]
    emit_gnuplot: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Comparison spec as JSON; missing fields take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
}

/// A pose given either as a row-major 4×4 matrix or in the native form.
#[derive(Deserialize)]
#[serde(untagged)]
enum PoseInput {
    Matrix([[f64; 4]; 4]),
    Native(Transform),
}

impl From<PoseInput> for Transform {
    fn from(p: PoseInput) -> Self {
        match p {
            PoseInput::Matrix(m) => Transform::from_matrix4(&nalgebra::Matrix4::from_fn(|i, j| m[i][j])),
            PoseInput::Native(t) => t,
        }
    }
}

#[derive(Deserialize)]
struct Sidecar {
    joints: Option<Vec<f64>>,
    flange: Option<PoseInput>,
    pose: Option<usize>,
}

#[derive(Serialize)]
struct RegisterOutput {
    /// Model → camera, row-major.
    matrix: [[f64; 4]; 4],
    transform: Transform,
    fitness: f64,
    rmse: f64,
    plane_rmse: f64,
    iterations: usize,
    converged: bool,
    ambiguous: bool,
}

#[derive(Serialize)]
struct BaselineOutput {
    matrix: [[f64; 4]; 4],
    transform: Transform,
    pairs: usize,
    weak_pairs: usize,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn robot_model(robot: Option<&Path>, mesh: Option<&Path>) -> Result<RobotModel> {
    Ok(match robot {
        Some(p) => RobotModel::load(p, mesh)?,
        None => {
            let mut m = RobotModel::fixture();
            if let Some(mesh) = mesh {
                m.base_mesh = load_obj(mesh)?;
            }
            m
        }
    })
}

fn gen_dataset(cli: &Cli, a: &GenDatasetArgs) -> Result<()> {
    let out = cli.out.as_deref().context("--out DIR is required")?;
    let robot = robot_model(a.robot.as_deref(), a.mesh.as_deref())?;
    let mut params = DatasetParams {
        radii: a.radii.clone(),
        n_views: a.views,
        n_configs: a.configs,
        noise: NoiseSpec { sigma_mm: a.noise_mm },
        seed: cli.seed.unwrap_or(0),
        ..DatasetParams::default()
    };
    if let Some(copies) = a.augment {
        params.augmentation = Some(basecal::scansim::AugmentationRanges { copies, ..Default::default() });
    }
    let (samples, manifest) = generate_dataset(&robot.chain, &robot.base_mesh, &params)?;
    write_dataset(out, &samples, &manifest)?;
    eprintln!("wrote {} samples to {} ({} skipped)", samples.len(), out.display(), manifest.skipped.len());
    Ok(())
}

fn register(cli: &Cli, a: &RegisterArgs) -> Result<()> {
    let mut params: RegistrationParams = match &a.params {
        Some(p) => read_json(p)?,
        None => RegistrationParams::default(),
    };
    params.unit = a.unit;
    let reference = PreparedReference::load(&a.model, &params)?;
    let scan = load_cloud(&a.scan)?;
    let (t_c_ref, res) = reference.register(&scan, cli.seed.unwrap_or(0))?;
    if !res.converged {
        log::warn!("registration not accepted: fitness {:.3}, plane rmse {:.2} mm", res.fitness, res.plane_rmse * 1e3);
    }
    emit(
        cli.out.as_deref(),
        &RegisterOutput {
            matrix: t_c_ref.matrix_rows(),
            transform: t_c_ref,
            fitness: res.fitness,
            rmse: res.inlier_rmse,
            plane_rmse: res.plane_rmse,
            iterations: res.iterations,
            converged: res.converged,
            ambiguous: res.ambiguous,
        },
    )
}

fn scan_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ply" | "xyz")));
    files.sort();
    if files.is_empty() {
        bail!("no .ply or .xyz scans in {}", dir.display());
    }
    Ok(files)
}

fn calibrate(cli: &Cli, a: &CalibrateArgs) -> Result<()> {
    let chain = a.robot.as_deref().map(basecal::kinematics::load_chain).transpose()?;
    let params = RegistrationParams { unit: a.unit, ..RegistrationParams::default() };
    let reference = PreparedReference::load(&a.model, &params)?;
    let seed = cli.seed.unwrap_or(0);
    let mut samples = Vec::new();
    for (i, path) in scan_files(&a.scans)?.into_iter().enumerate() {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scan").to_string();
        let sidecar_path = path.with_extension("json");
        let sidecar: Option<Sidecar> = sidecar_path.exists().then(|| read_json(&sidecar_path)).transpose()?;
        let pose = sidecar.as_ref().and_then(|s| s.pose);
        let flange = match a.mode {
            CalibrationMode::EyeToHand => None,
            CalibrationMode::EyeInHand => {
                let s = sidecar.with_context(|| format!("{id}: eye-in-hand needs {}", sidecar_path.display()))?;
                Some(match (s.flange, s.joints) {
                    (Some(f), _) => Transform::from(f),
                    (None, Some(q)) => {
                        let chain = chain.as_ref().context("--robot is required for sidecars with joint angles")?;
                        chain.forward_kinematics(&JointConfig::new(q))?
                    }
                    (None, None) => bail!("{}: neither `joints` nor `flange` given", sidecar_path.display()),
                })
            }
        };
        let scan = load_cloud(&path)?;
        let (mut sample, res) = calibrate_scan(&reference, &scan, flange.as_ref(), id.clone(), seed ^ i as u64)?;
        if !res.converged {
            let msg = format!("{id}: registration rejected (fitness {:.3}, plane rmse {:.2} mm)", res.fitness, res.plane_rmse * 1e3);
            if a.skip_rejected {
                log::warn!("{msg}, skipped");
                continue;
            }
            bail!(msg);
        }
        if let Some(p) = pose {
            sample = sample.with_pose_index(p);
        }
        eprintln!("{id}: fitness {:.3}, rmse {:.3} mm", res.fitness, res.inlier_rmse * 1e3);
        samples.push(sample);
    }
    let report = fuse_with(samples, FuseOptions { per_pose_mean: a.per_pose_mean })?;
    emit(cli.out.as_deref(), &report)
}

fn baseline(cli: &Cli, a: &BaselineArgs) -> Result<()> {
    let poses: Vec<Transform> = read_json::<Vec<PoseInput>>(&a.poses)?.into_iter().map(Transform::from).collect();
    let obs: Vec<Transform> = read_json::<Vec<PoseInput>>(&a.observations)?.into_iter().map(Transform::from).collect();
    let pairs = make_pairs(&poses, &obs, PairOptions { all_pairs: a.all_pairs })?;
    let weak_pairs = pairs.iter().filter(|p| p.weak).count();
    if weak_pairs > 0 {
        log::warn!("{weak_pairs} of {} motion pairs rotate less than {} deg", pairs.len(), basecal::baseline::WEAK_MOTION_DEG);
    }
    let x = solve_ax_xb(&pairs)?;
    emit(cli.out.as_deref(), &BaselineOutput { matrix: x.matrix_rows(), transform: x, pairs: pairs.len(), weak_pairs })
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let mut spec: ExperimentSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => ExperimentSpec::default(),
    };
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(n) = a.poses {
        spec.n_poses = n;
    }
    if let Some(n) = a.scans {
        spec.n_scans_per_pose = n;
    }
    if let Some(s) = a.noise_mm {
        spec.noise = NoiseSpec { sigma_mm: s };
    }
    let result = run_simulation_study(&spec)?;
    eprintln!(
        "{} calibrations, {} skipped: RTE {:.3} ± {:.3} mm, RRE {:.4} ± {:.4} deg, {:.2} s each",
        result.records.len(),
        result.skipped.len(),
        result.rte_mm.mean,
        result.rte_mm.std,
        result.rre_deg.mean,
        result.rre_deg.std,
        result.mean_runtime_s
    );
    match cli.out.as_deref() {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            result.write_csv(dir.join("results.csv"))?;
            write_json(&dir.join("summary.json"), &result)?;
            write_json(&dir.join("report.json"), &result.report()?)?;
            if a.emit_gnuplot {
                result.emit_gnuplot(dir)?;
            }
        }
        None => {
            if a.emit_gnuplot {
                bail!("--emit-gnuplot needs --out DIR");
            }
            print!("{}", result.to_csv());
        }
    }
    Ok(())
}

fn compare(cli: &Cli, a: &CompareArgs) -> Result<()> {
    let mut spec: CompareSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => CompareSpec::default(),
    };
    if let Some(s) = cli.seed {
        spec.experiment.seed = s;
    }
    let table = compare_with_baseline(&spec)?;
    print!("{}", table.to_text());
    if let Some(p) = cli.out.as_deref() {
        write_json(p, &table)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.cmd {
        Command::GenDataset(a) => gen_dataset(&cli, a),
        Command::Register(a) => register(&cli, a),
        Command::Calibrate(a) => calibrate(&cli, a),
        Command::Baseline(a) => baseline(&cli, a),
        Command::Simulate(a) => simulate(&cli, a),
        Command::Compare(a) => compare(&cli, a),
    }
}
