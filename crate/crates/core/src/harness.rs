//! Experiment runner: sample base-looking robot poses, render scans from the
//! flange-mounted camera, calibrate from every scan and score the estimates
//! against the simulated camera offset.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{make_pairs, solve_ax_xb, synthesize_observations, ObservationNoise, PairOptions};
use crate::calibrate::{calibrate_scan, fuse, CalibrationReport, CalibrationSample, PoseSummary};
use crate::cloud::{load_obj, TriangleMesh};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::geom::{average_transforms, PoseError};
use crate::kinematics::{load_chain, sample_base_looking_poses, JointConfig, KinematicChain, ViewConstraints};
use crate::registration::{pre_transform_mesh, PreparedReference, RegistrationParams, UnitHint};
use crate::scansim::{arm_proxy_mesh, view_rng, NoiseSpec, Scene, VirtualCamera};
use crate::Transform;

/// A robot as the harness needs it: kinematics plus the base model.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub chain: KinematicChain<f64>,
    /// Base mesh in its file units.
    pub base_mesh: TriangleMesh,
}

impl RobotModel {
    /// The built-in six-axis test robot.
    pub fn fixture() -> Self {
        Self { name: "ur5e_like".into(), chain: fixtures::ur5e_like_chain(), base_mesh: fixtures::robot_base_mesh() }
    }

    /// Loads a chain file; the base mesh comes from `mesh` or else from the
    /// chain's own mesh reference.
    pub fn load(chain_path: &Path, mesh: Option<&Path>) -> Result<Self> {
        let chain = load_chain(chain_path)?;
        let mesh_path = mesh
            .map(Path::to_path_buf)
            .or_else(|| chain.base_mesh.clone())
            .ok_or_else(|| Error::Parameter(format!("{} names no base mesh; pass one explicitly", chain_path.display())))?;
        let base_mesh = load_obj(&mesh_path)?;
        let name = if chain.name.is_empty() { "robot".to_string() } else { chain.name.clone() };
        Ok(Self { name, chain, base_mesh })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    /// Chain file; `None` selects the built-in fixture robot.
    pub robot: Option<PathBuf>,
    /// Base mesh overriding the chain's reference.
    pub base_mesh: Option<PathBuf>,
    /// Flange → camera transform used by the simulator (the ground truth).
    pub camera_offset: Transform,
    pub n_poses: usize,
    pub n_scans_per_pose: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Camera-to-target distance band for pose sampling, meters.
    pub radii: [f64; 2],
    pub camera: VirtualCamera,
    pub view: ViewConstraints,
    /// Render the arm links as cylinders so they occlude and clutter scans.
    pub arm_clutter: bool,
    pub link_radius: f64,
    /// Half-size of a floor square at z = 0, or 0 for no floor.
    pub floor_half_size: f64,
    pub unit: UnitHint,
    pub registration: RegistrationParams,
    /// Measure wall-clock time per calibration. Off makes outputs reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            robot: None,
            base_mesh: None,
            camera_offset: fixtures::default_camera_offset(),
            n_poses: 30,
            n_scans_per_pose: 30,
            noise: NoiseSpec::default(),
            seed: 0,
            radii: [0.5, 0.7],
            camera: VirtualCamera::default(),
            // Views from straight above see little but the arm and a flat cap.
            view: ViewConstraints { max_elevation_deg: 70.0, ..ViewConstraints::default() },
            arm_clutter: true,
            link_radius: 0.04,
            floor_half_size: 0.0,
            unit: UnitHint::Auto,
            registration: RegistrationParams::default(),
            record_timing: true,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_poses == 0 || self.n_scans_per_pose == 0 {
            return Err(Error::Parameter("n_poses and n_scans_per_pose must be at least 1".into()));
        }
        if !(self.radii[0] > 0.0 && self.radii[0] <= self.radii[1]) {
            return Err(Error::Parameter(format!("bad radii {:?}", self.radii)));
        }
        if !self.camera_offset.is_finite() {
            return Err(Error::Parameter("camera offset is not finite".into()));
        }
        self.camera.validate()
    }

    pub fn robot_model(&self) -> Result<RobotModel> {
        match &self.robot {
            Some(p) => RobotModel::load(p, self.base_mesh.as_deref()),
            None => {
                let mut m = RobotModel::fixture();
                if let Some(mesh) = &self.base_mesh {
                    m.base_mesh = load_obj(mesh)?;
                }
                Ok(m)
            }
        }
    }

    fn constraints(&self) -> ViewConstraints {
        ViewConstraints { min_range: self.radii[0], max_range: self.radii[1], ..self.view.clone() }
    }
}

/// Per-scan outcome of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub pose_idx: usize,
    pub scan_idx: usize,
    pub error: PoseError,
    pub fitness: f64,
    pub rmse_m: f64,
    pub runtime_s: f64,
    pub points: usize,
    pub sample: CalibrationSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub pose_idx: usize,
    pub scan_idx: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, median: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { n, mean, median, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseAggregate {
    pub pose_idx: usize,
    pub config: Vec<f64>,
    pub rte_mm: Stats,
    pub rre_deg: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub robot: String,
    pub truth: Transform,
    pub records: Vec<ScanRecord>,
    pub skipped: Vec<Skip>,
    pub per_pose: Vec<PoseAggregate>,
    pub rte_mm: Stats,
    pub rre_deg: Stats,
    /// Mean register + solve time per calibration, seconds (0 when not recorded).
    pub mean_runtime_s: f64,
}

impl ExperimentResult {
    fn assemble(robot: String, truth: Transform, configs: &[JointConfig<f64>], records: Vec<ScanRecord>, skipped: Vec<Skip>) -> Self {
        let per_pose = configs
            .iter()
            .enumerate()
            .filter_map(|(p, q)| {
                let rows: Vec<&ScanRecord> = records.iter().filter(|r| r.pose_idx == p).collect();
                (!rows.is_empty()).then(|| PoseAggregate {
                    pose_idx: p,
                    config: q.angles.clone(),
                    rte_mm: Stats::of(&rows.iter().map(|r| r.error.rte_mm).collect::<Vec<_>>()),
                    rre_deg: Stats::of(&rows.iter().map(|r| r.error.rre_deg).collect::<Vec<_>>()),
                })
            })
            .collect();
        let rte: Vec<f64> = records.iter().map(|r| r.error.rte_mm).collect();
        let rre: Vec<f64> = records.iter().map(|r| r.error.rre_deg).collect();
        let mean_runtime_s = if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.runtime_s).sum::<f64>() / records.len() as f64
        };
        Self { robot, truth, per_pose, rte_mm: Stats::of(&rte), rre_deg: Stats::of(&rre), mean_runtime_s, records, skipped }
    }

    /// Fused calibration over the scans of one pose.
    pub fn pose_report(&self, pose_idx: usize) -> Result<CalibrationReport> {
        fuse(self.records.iter().filter(|r| r.pose_idx == pose_idx).map(|r| r.sample.clone()).collect())
    }

    /// Fused calibration over every scan.
    pub fn report(&self) -> Result<CalibrationReport> {
        fuse(self.records.iter().map(|r| r.sample.clone()).collect())
    }

    /// One row per scan: `robot,pose_idx,scan_idx,rte_mm,rre_deg,fitness,rmse_m,runtime_s`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("robot,pose_idx,scan_idx,rte_mm,rre_deg,fitness,rmse_m,runtime_s\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                self.robot, r.pose_idx, r.scan_idx, r.error.rte_mm, r.error.rre_deg, r.fitness, r.rmse_m, r.runtime_s
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Writes whitespace-separated data files and a gnuplot script plotting
    /// per-scan errors and per-pose mean ± std.
    pub fn emit_gnuplot(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut scans = String::from("# pose scan rte_mm rre_deg\n");
        for r in &self.records {
            let _ = writeln!(scans, "{} {} {} {}", r.pose_idx, r.scan_idx, r.error.rte_mm, r.error.rre_deg);
        }
        let mut poses = String::from("# pose rte_mean rte_median rte_std rre_mean rre_median rre_std\n");
        for p in &self.per_pose {
            let _ = writeln!(
                poses,
                "{} {} {} {} {} {} {}",
                p.pose_idx, p.rte_mm.mean, p.rte_mm.median, p.rte_mm.std, p.rre_deg.mean, p.rre_deg.median, p.rre_deg.std
            );
        }
        let script = "set terminal pngcairo size 1000,400\n\
set output 'errors.png'\n\
set multiplot layout 1,2\n\
set xlabel 'pose'\n\
set ylabel 'RTE (mm)'\n\
plot 'scans.dat' using 1:3 with points pt 7 ps 0.4 title 'scan', \\\n\
     'poses.dat' using 1:2:4 with yerrorlines title 'pose mean ± std'\n\
set ylabel 'RRE (deg)'\n\
plot 'scans.dat' using 1:4 with points pt 7 ps 0.4 title 'scan', \\\n\
     'poses.dat' using 1:5:7 with yerrorlines title 'pose mean ± std'\n\
unset multiplot\n";
        for (name, text) in [("scans.dat", scans.as_str()), ("poses.dat", poses.as_str()), ("errors.gp", script)] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Scene for one robot configuration: the base, optionally the arm links and a floor.
pub fn pose_scene(robot: &RobotModel, base_m: &TriangleMesh, q: &JointConfig<f64>, spec: &ExperimentSpec) -> Result<Scene> {
    let mut mesh = base_m.clone();
    if spec.arm_clutter {
        mesh.append(&arm_proxy_mesh(&robot.chain, q, spec.link_radius)?);
    }
    if spec.floor_half_size > 0.0 {
        let h = spec.floor_half_size;
        // Just below the mounting face so the two never coincide.
        mesh.append(&TriangleMesh::cuboid(Point3::new(-h, -h, -0.011), Point3::new(h, h, -0.001)));
    }
    Ok(Scene::new(mesh))
}

/// Seeds for the scan noise stream and the registration of one scan.
fn scan_stream(pose: usize, scan: usize) -> u64 {
    ((pose as u64) << 32) | scan as u64
}

/// Base-looking configurations for `spec`, reproducible from its seed.
pub fn sample_poses(robot: &RobotModel, spec: &ExperimentSpec) -> Result<Vec<JointConfig<f64>>> {
    let mut rng = view_rng(spec.seed, u64::MAX - 1);
    sample_base_looking_poses(&robot.chain, &spec.camera_offset, &spec.constraints(), spec.n_poses, &mut rng)
}

/// Runs the poses × scans protocol. Results are ordered by (pose, scan)
/// regardless of scheduling; failed registrations are logged and skipped,
/// and more than half failing aborts the study.
pub fn run_simulation_study(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let robot = spec.robot_model()?;
    let (base_m, _) = pre_transform_mesh(&robot.base_mesh, spec.unit)?;
    let reference = PreparedReference::from_mesh(&robot.base_mesh, &RegistrationParams { unit: spec.unit, ..spec.registration.clone() })?;
    let configs = sample_poses(&robot, spec)?;
    let truth = spec.camera_offset;

    let scenes = configs
        .par_iter()
        .map(|q| pose_scene(&robot, &base_m, q, spec))
        .collect::<Result<Vec<_>>>()?;
    let flanges = configs.iter().map(|q| robot.chain.forward_kinematics(q)).collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|p| (0..spec.n_scans_per_pose).map(move |s| (p, s))).collect();
    let outcomes: Vec<std::result::Result<ScanRecord, Skip>> = jobs
        .par_iter()
        .map(|&(p, s)| {
            let skip = |reason: String| Skip { pose_idx: p, scan_idx: s, reason };
            let camera = spec.camera.with_pose(flanges[p].compose(&truth));
            let stream = scan_stream(p, s);
            let scan = scenes[p].render(&camera, spec.noise, &mut view_rng(spec.seed, stream)).map_err(|e| skip(e.to_string()))?;
            let start = Instant::now();
            let (sample, res) = calibrate_scan(&reference, &scan, Some(&flanges[p]), format!("p{p:03}_s{s:03}"), spec.seed ^ stream)
                .map_err(|e| skip(e.to_string()))?;
            let runtime_s = if spec.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };
            if !res.converged {
                return Err(skip(format!(
                    "registration rejected: fitness {:.3}, plane rmse {:.2} mm",
                    res.fitness,
                    res.plane_rmse * 1e3
                )));
            }
            Ok(ScanRecord {
                pose_idx: p,
                scan_idx: s,
                error: PoseError::between(&sample.estimate, &truth),
                fitness: res.fitness,
                rmse_m: res.inlier_rmse,
                runtime_s,
                points: scan.len(),
                sample: sample.with_pose_index(p),
            })
        })
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(s) => {
                log::warn!("pose {} scan {} skipped: {}", s.pose_idx, s.scan_idx, s.reason);
                skipped.push(s);
            }
        }
    }
    if 2 * skipped.len() > jobs.len() {
        let reasons: Vec<String> = skipped.iter().take(5).map(|s| format!("p{} s{}: {}", s.pose_idx, s.scan_idx, s.reason)).collect();
        return Err(Error::Aborted(format!(
            "{} of {} calibrations failed; first failures: {}",
            skipped.len(),
            jobs.len(),
            reasons.join("; ")
        )));
    }
    Ok(ExperimentResult::assemble(robot.name, truth, &configs, records, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstNRow {
    pub n: usize,
    pub fused: Transform,
    /// Per-axis translation deviation from the all-sample fused result, mm.
    pub deviation_mm: [f64; 3],
    /// Per-axis XYZ Euler-angle deviation from the all-sample fused result, degrees.
    pub deviation_deg: [f64; 3],
}

/// Fused estimate over the first `n` samples for each `n` in `ns`, compared
/// with the fused estimate over every sample.
pub fn first_n_convergence(report: &CalibrationReport, ns: &[usize]) -> Result<Vec<FirstNRow>> {
    let max = ns.iter().copied().max().unwrap_or(0);
    if max > report.samples.len() || ns.contains(&0) {
        return Err(Error::TooFewPoints { needed: max.max(1), have: report.samples.len() });
    }
    let estimates: Vec<Transform> = report.samples.iter().map(|s| s.estimate).collect();
    let full = report.fused;
    let e_full = full.euler_xyz();
    ns.iter()
        .map(|&n| {
            let fused = average_transforms(&estimates[..n])?;
            let e = fused.euler_xyz();
            Ok(FirstNRow {
                n,
                fused,
                deviation_mm: std::array::from_fn(|k| (fused.translation[k] - full.translation[k]) * 1e3),
                deviation_deg: std::array::from_fn(|k| (e[k] - e_full[k]).to_degrees()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSpec {
    pub experiment: ExperimentSpec,
    /// Poses used by the AX = XB baseline.
    pub baseline_poses: usize,
    pub baseline_noise: ObservationNoise,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            experiment: ExperimentSpec { n_poses: 1, n_scans_per_pose: 1, ..Default::default() },
            baseline_poses: 14,
            baseline_noise: ObservationNoise::default(),
        }
    }
}

/// One method's calibration in the reporting convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub poses: usize,
    pub estimate: PoseSummary,
    pub error: PoseError,
    /// Wall-clock per calibration, seconds.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub truth: PoseSummary,
    pub rows: Vec<ComparisonRow>,
    /// Translation difference between the two estimates, mm, per axis.
    pub offset_mm: [f64; 3],
    /// XYZ Euler-angle difference between the two estimates, degrees.
    pub offset_deg: [f64; 3],
}

impl ComparisonTable {
    /// Fixed-width text table: TX TY TZ (m), RX RY RZ (rad), time.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<10} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9} {:>8}\n",
            "method", "poses", "TX (m)", "TY (m)", "TZ (m)", "RX (rad)", "RY (rad)", "RZ (rad)", "RTE mm", "RRE deg", "time s"
        );
        let mut line = |name: &str, poses: String, e: &PoseSummary, err: String, secs: String| {
            let t = e.translation_m;
            let r = e.euler_xyz_rad;
            let _ = writeln!(
                s,
                "{name:<10} {poses:>5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {err} {secs:>8}",
                t[0], t[1], t[2], r[0], r[1], r[2]
            );
        };
        line("truth", "-".into(), &self.truth, format!("{:>9} {:>9}", "-", "-"), "-".into());
        for row in &self.rows {
            line(
                &row.method,
                row.poses.to_string(),
                &row.estimate,
                format!("{:>9.3} {:>9.4}", row.error.rte_mm, row.error.rre_deg),
                format!("{:.3}", row.seconds),
            );
        }
        s
    }
}

/// Single-scan base registration against an AX = XB solution from
/// `baseline_poses` poses with synthesized target observations.
pub fn compare_with_baseline(spec: &CompareSpec) -> Result<ComparisonTable> {
    let exp = ExperimentSpec { n_poses: 1, n_scans_per_pose: 1, ..spec.experiment.clone() };
    let single = run_simulation_study(&exp)?;
    let rec = single.records.first().ok_or_else(|| Error::Registration("single-scan calibration failed".into()))?;
    let truth = exp.camera_offset;

    let robot = exp.robot_model()?;
    let base_spec = ExperimentSpec { n_poses: spec.baseline_poses, seed: exp.seed.wrapping_add(1), ..exp.clone() };
    let configs = sample_poses(&robot, &base_spec)?;
    let flanges = configs.iter().map(|q| robot.chain.forward_kinematics(q)).collect::<Result<Vec<_>>>()?;
    // Calibration target where the base would be seen, facing up.
    let t = exp.view.target;
    let t_b_o = Transform::from_translation(Vector3::new(t[0], t[1], t[2]));
    let obs = synthesize_observations(&flanges, &truth, &t_b_o, spec.baseline_noise, &mut view_rng(exp.seed, u64::MAX - 2))?;
    let start = Instant::now();
    let pairs = make_pairs(&flanges, &obs, PairOptions::default())?;
    let x = solve_ax_xb(&pairs)?;
    let seconds = if exp.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };

    let e_a = rec.sample.estimate;
    let (ea, eb) = (e_a.euler_xyz(), x.euler_xyz());
    Ok(ComparisonTable {
        truth: PoseSummary::from(&truth),
        offset_mm: std::array::from_fn(|k| (e_a.translation[k] - x.translation[k]) * 1e3),
        offset_deg: std::array::from_fn(|k| (ea[k] - eb[k]).to_degrees()),
        rows: vec![
            ComparisonRow {
                method: "base-scan".into(),
                poses: 1,
                estimate: PoseSummary::from(&e_a),
                error: rec.error,
                seconds: rec.runtime_s,
            },
            ComparisonRow {
                method: "ax=xb".into(),
                poses: spec.baseline_poses,
                estimate: PoseSummary::from(&x),
                error: PoseError::between(&x, &truth),
                seconds,
            },
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_by_hand() {
        let s = Stats::of(&[1.0, 2.0, 4.0, 5.0]);
        assert_eq!((s.n, s.mean, s.median), (4, 3.0, 3.0));
        assert!((s.std - (10.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stats::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn spec_rejects_empty_study() {
        let spec = ExperimentSpec { n_poses: 0, ..Default::default() };
        assert!(spec.validate().is_err());
        let spec = ExperimentSpec { radii: [0.7, 0.5], ..Default::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_defaults_fill_in() {
        let spec: ExperimentSpec = serde_json::from_str(r#"{"n_poses": 3, "seed": 9}"#).unwrap();
        assert_eq!((spec.n_poses, spec.n_scans_per_pose, spec.seed), (3, 30, 9));
    }
}
