use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use geocalib::anchors::{build_anchors, Anchor, AnchorStats, ElevationGrid, OrthoMeta};
use geocalib::eval::{evaluate_reprojection, vl_benchmark, ReprojReport, VlReport};
use geocalib::graph::{Ablations, StageReport};
use geocalib::io::{self, Sequence};
use geocalib::pipeline::{ins_camera_poses, refine, ExtrinsicReport, RefineConfig, RefineInputs};
use geocalib::{Error, Intrinsics, Pose, Result};
use geocalib_sim::{files, simulate, write_dataset};
use serde::Serialize;

use crate::config::RunConfig;

/// Output names of `refine`.
pub mod out {
    pub const INTRINSICS: &str = "intrinsics.json";
    pub const EXTRINSICS: &str = "extrinsics.json";
    pub const POSES: &str = "poses.jsonl";
    pub const STAGES: &str = "stages.json";
    pub const EXTRINSIC_REPORT: &str = "extrinsic_report.json";
    pub const ANCHORS: &str = "anchors.json";
    pub const REPORT: &str = "report.json";
    pub const EVALUATION: &str = "evaluation.json";
    pub const VL: &str = "vl.json";
}

fn timestamp(enabled: bool) -> Option<u64> {
    enabled.then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

fn require_file(path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::Format {
            path: path.display().to_string(),
            message: "file not found".into(),
        })
    }
}

fn require_dir(path: &Path) -> Result<PathBuf> {
    if path.is_dir() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::Format {
            path: path.display().to_string(),
            message: "directory not found".into(),
        })
    }
}

/// Everything `refine` and `evaluate` read from a dataset directory.
pub struct DatasetFiles {
    pub sequence: Sequence,
    pub dem: ElevationGrid,
    pub ortho: OrthoMeta,
}

pub fn load_dataset(dir: &Path) -> Result<DatasetFiles> {
    let dir = require_dir(dir)?;
    let seq = require_file(&dir.join(files::SEQUENCE))?;
    let dem = require_file(&dir.join(files::DEM))?;
    let ortho = require_file(&dir.join(files::ORTHO))?;
    Ok(DatasetFiles {
        sequence: io::read_sequence(&seq)?,
        dem: io::read_dem(&dem)?,
        ortho: io::read_ortho(&ortho)?,
    })
}

pub struct SimulateArgs {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub validate_only: bool,
}

pub fn cmd_simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<()> {
    let mut sim = cfg.simulate.clone();
    if let Some(s) = args.seed {
        sim.seed = s;
    }
    sim.validate()?;
    if args.validate_only {
        println!("configuration ok");
        return Ok(());
    }
    let ds = simulate(&sim)?;
    write_dataset(&args.out, &ds)?;
    println!(
        "wrote {} frames ({} observations, {:.1} per frame) to {}",
        ds.stats.frames,
        ds.stats.observations,
        ds.stats.observations_per_frame_mean,
        args.out.display()
    );
    Ok(())
}

pub struct RefineArgs {
    pub data: PathBuf,
    pub intrinsics: Option<PathBuf>,
    pub extrinsics: Option<PathBuf>,
    pub out: PathBuf,
    pub ablations: Ablations,
    pub timestamp: bool,
    pub validate_only: bool,
}

#[derive(Serialize)]
struct ReprojSummary {
    median: f64,
    mad: f64,
    count: usize,
    behind_camera: usize,
    missing_frames: usize,
}

impl From<&ReprojReport> for ReprojSummary {
    fn from(r: &ReprojReport) -> Self {
        Self {
            median: r.median,
            mad: r.mad,
            count: r.count,
            behind_camera: r.behind_camera,
            missing_frames: r.missing_frames,
        }
    }
}

#[derive(Serialize)]
struct RefineReport<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    created_unix: Option<u64>,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    config: &'a RefineConfig,
    frames: usize,
    anchors: Option<AnchorStats>,
    stages: &'a [StageReport],
    extrinsic: Option<&'a ExtrinsicReport>,
    reprojection_before: Option<ReprojSummary>,
    reprojection_after: Option<ReprojSummary>,
}

pub fn cmd_refine(cfg: &RunConfig, args: &RefineArgs) -> Result<()> {
    let mut rc = cfg.refine.clone();
    rc.ablations.no_nadir |= args.ablations.no_nadir;
    rc.ablations.cam_opt_joint |= args.ablations.cam_opt_joint;
    rc.ablations.no_fine_adjust |= args.ablations.no_fine_adjust;
    rc.validate()?;

    let k_path = require_file(&args.intrinsics.clone().unwrap_or_else(|| args.data.join(files::INTRINSICS_INIT)))?;
    let t_path = require_file(&args.extrinsics.clone().unwrap_or_else(|| args.data.join(files::EXTRINSICS_INIT)))?;
    let data = load_dataset(&args.data)?;
    let k0 = io::read_intrinsics(&k_path)?;
    let t0 = io::read_pose(&t_path)?;
    if args.validate_only {
        println!("configuration and inputs ok ({} frames)", data.sequence.ins.len());
        return Ok(());
    }

    std::fs::create_dir_all(&args.out)?;
    let stages_path = args.out.join(out::STAGES);
    io::write_json(&stages_path, &Vec::<StageReport>::new())?;
    let mut stages = Vec::new();
    let mut write_err = None;
    let inputs = RefineInputs {
        ins: &data.sequence.ins,
        correspondences: &data.sequence.correspondences,
        ortho: &data.ortho,
        dem: &data.dem,
        intrinsics: k0,
        extrinsic: t0,
    };
    let result = refine(&inputs, &rc, |r| {
        log::info!("stage {} ({}) done: cost {:.6e} -> {:.6e}", r.stage, r.name, r.cost_before, r.cost_after);
        stages.push(r.clone());
        if let Err(e) = io::write_json(&stages_path, &stages) {
            write_err.get_or_insert(e);
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }

    let mut report = RefineReport {
        created_unix: timestamp(args.timestamp),
        status: "ok",
        error: None,
        config: &rc,
        frames: data.sequence.ins.len(),
        anchors: None,
        stages: &stages,
        extrinsic: None,
        reprojection_before: None,
        reprojection_after: None,
    };
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            report.status = "failed";
            report.error = Some(e.to_string());
            io::write_json(&args.out.join(out::REPORT), &report)?;
            return Err(e);
        }
    };

    io::write_intrinsics(&args.out.join(out::INTRINSICS), &output.intrinsics)?;
    io::write_pose(&args.out.join(out::EXTRINSICS), &output.extrinsic)?;
    io::write_poses(&args.out.join(out::POSES), output.camera_poses.iter().map(|(f, p)| (*f, p)))?;
    io::write_json(&args.out.join(out::EXTRINSIC_REPORT), &output.extrinsic_report)?;
    io::write_anchors(&args.out.join(out::ANCHORS), &output.anchors.anchors)?;

    let before = evaluate_reprojection(&output.anchors.anchors, &ins_camera_poses(&data.sequence.ins, &t0), &k0)?;
    let after = evaluate_reprojection(
        &output.anchors.anchors,
        &ins_camera_poses(&data.sequence.ins, &output.extrinsic),
        &output.intrinsics,
    )?;
    report.anchors = Some(output.anchors.stats);
    report.extrinsic = Some(&output.extrinsic_report);
    report.reprojection_before = Some((&before).into());
    report.reprojection_after = Some((&after).into());
    io::write_json(&args.out.join(out::REPORT), &report)?;

    let k = &output.intrinsics;
    let t = &output.extrinsic;
    println!("anchors      {} of {} candidates", output.anchors.stats.kept, output.anchors.stats.candidates);
    for s in &stages {
        println!(
            "stage {} {:<13} {:>4} it  {:.4e} -> {:.4e}{}",
            s.stage,
            s.name,
            s.iterations,
            s.cost_before,
            s.cost_after,
            if s.converged { "" } else { "  (iteration cap)" }
        );
    }
    println!("intrinsics   fx {:.3} fy {:.3} cx {:.3} cy {:.3}", k.fx, k.fy, k.cx, k.cy);
    println!(
        "extrinsic    rotation change {:.4} deg, translation change {:.4} m",
        t0.rotation.angle_to(&t.rotation).to_degrees(),
        (t.translation - t0.translation).norm()
    );
    println!(
        "reprojection {:.3} +/- {:.3} px -> {:.3} +/- {:.3} px",
        before.median, before.mad, after.median, after.mad
    );
    Ok(())
}

/// A calibration to evaluate: `label=DIR` (a refine output directory) or
/// `label=INTRINSICS,EXTRINSICS`.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibSpec {
    pub label: String,
    pub intrinsics: PathBuf,
    pub extrinsics: PathBuf,
}

impl std::str::FromStr for CalibSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (label, rest) = s.split_once('=').ok_or_else(|| format!("expected LABEL=DIR or LABEL=INTRINSICS,EXTRINSICS, got {s:?}"))?;
        if label.is_empty() {
            return Err("empty calibration label".into());
        }
        let (intrinsics, extrinsics) = match rest.split_once(',') {
            Some((k, t)) => (PathBuf::from(k), PathBuf::from(t)),
            None => (Path::new(rest).join(out::INTRINSICS), Path::new(rest).join(out::EXTRINSICS)),
        };
        Ok(Self {
            label: label.to_string(),
            intrinsics,
            extrinsics,
        })
    }
}

struct Calib {
    label: String,
    k: Intrinsics,
    t: Pose,
}

fn load_calibs(data: &Path, specs: &[CalibSpec]) -> Result<Vec<Calib>> {
    let specs = if specs.is_empty() {
        vec![CalibSpec {
            label: "initial".into(),
            intrinsics: data.join(files::INTRINSICS_INIT),
            extrinsics: data.join(files::EXTRINSICS_INIT),
        }]
    } else {
        specs.to_vec()
    };
    let mut labels = std::collections::BTreeSet::new();
    specs
        .iter()
        .map(|s| {
            if !labels.insert(s.label.clone()) {
                return Err(Error::Config(format!("calibration label {:?} given twice", s.label)));
            }
            Ok(Calib {
                label: s.label.clone(),
                k: io::read_intrinsics(&require_file(&s.intrinsics)?)?,
                t: io::read_pose(&require_file(&s.extrinsics)?)?,
            })
        })
        .collect()
}

pub struct EvaluateArgs {
    pub data: PathBuf,
    pub calibs: Vec<CalibSpec>,
    pub anchors: Option<PathBuf>,
    pub vl: bool,
    pub out: PathBuf,
    pub timestamp: bool,
    pub validate_only: bool,
}

#[derive(Serialize)]
struct VlSummary {
    rotation_median: Option<f64>,
    rotation_mad: Option<f64>,
    translation_median: Option<f64>,
    translation_mad: Option<f64>,
    accuracy: Vec<geocalib::eval::VlAccuracy>,
    evaluated: usize,
    skipped: usize,
}

impl From<&VlReport> for VlSummary {
    fn from(r: &VlReport) -> Self {
        Self {
            rotation_median: r.rotation_median,
            rotation_mad: r.rotation_mad,
            translation_median: r.translation_median,
            translation_mad: r.translation_mad,
            accuracy: r.accuracy.clone(),
            evaluated: r.frames.len(),
            skipped: r.skipped,
        }
    }
}

#[derive(Serialize)]
struct EvalEntry {
    label: String,
    reprojection: ReprojSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    vl: Option<VlSummary>,
}

#[derive(Serialize)]
struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    created_unix: Option<u64>,
    anchors: usize,
    calibrations: Vec<EvalEntry>,
}

struct VlInputs {
    frames: Vec<geocalib::eval::VlFrame>,
    gt: BTreeMap<u32, Pose>,
}

fn load_vl(data: &Path) -> Result<VlInputs> {
    let frames = io::read_vl_matches(&require_file(&data.join(files::VL_MATCHES))?)?;
    let truth = io::read_truth(&require_file(&data.join(files::TRUTH))?)?;
    Ok(VlInputs { frames, gt: truth.ins_poses })
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

pub fn cmd_evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    cfg.validate()?;
    let data = load_dataset(&args.data)?;
    let calibs = load_calibs(&args.data, &args.calibs)?;
    let anchors: Vec<Anchor> = match &args.anchors {
        Some(p) => io::read_anchors(&require_file(p)?)?,
        None => build_anchors(&data.sequence.correspondences, &data.ortho, &data.dem, &cfg.refine.effective_filters()).anchors,
    };
    let vl = if args.vl { Some(load_vl(&args.data)?) } else { None };
    if args.validate_only {
        println!("configuration and inputs ok ({} calibrations)", calibs.len());
        return Ok(());
    }

    let mut entries = Vec::new();
    println!("{:<16} {:>10} {:>8} {:>9}  {:>9} {:>9}", "calibration", "reproj px", "mad", "count", "vl deg", "vl m");
    for c in &calibs {
        let rep = evaluate_reprojection(&anchors, &ins_camera_poses(&data.sequence.ins, &c.t), &c.k)?;
        let vl_rep = vl
            .as_ref()
            .map(|v| vl_benchmark(&v.frames, &c.k, &c.t, &v.gt, &cfg.evaluate.vl_thresholds));
        println!(
            "{:<16} {:>10.3} {:>8.3} {:>9}  {:>9} {:>9}",
            c.label,
            rep.median,
            rep.mad,
            rep.count,
            fmt_opt(vl_rep.as_ref().and_then(|r| r.rotation_median), 4),
            fmt_opt(vl_rep.as_ref().and_then(|r| r.translation_median), 3),
        );
        entries.push(EvalEntry {
            label: c.label.clone(),
            reprojection: (&rep).into(),
            vl: vl_rep.as_ref().map(Into::into),
        });
    }
    std::fs::create_dir_all(&args.out)?;
    io::write_json(
        &args.out.join(out::EVALUATION),
        &EvalReport {
            created_unix: timestamp(args.timestamp),
            anchors: anchors.len(),
            calibrations: entries,
        },
    )?;
    Ok(())
}

pub struct BenchVlArgs {
    pub data: PathBuf,
    pub calibs: Vec<CalibSpec>,
    pub out: PathBuf,
    pub timestamp: bool,
    pub validate_only: bool,
}

#[derive(Serialize)]
struct VlEntry {
    label: String,
    report: VlReport,
}

#[derive(Serialize)]
struct VlFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    created_unix: Option<u64>,
    calibrations: Vec<VlEntry>,
}

pub fn cmd_bench_vl(cfg: &RunConfig, args: &BenchVlArgs) -> Result<()> {
    cfg.validate()?;
    require_dir(&args.data)?;
    let calibs = load_calibs(&args.data, &args.calibs)?;
    let vl = load_vl(&args.data)?;
    if args.validate_only {
        println!("configuration and inputs ok ({} frames)", vl.frames.len());
        return Ok(());
    }
    let mut entries = Vec::new();
    for c in &calibs {
        let r = vl_benchmark(&vl.frames, &c.k, &c.t, &vl.gt, &cfg.evaluate.vl_thresholds);
        let acc: Vec<String> = r
            .accuracy
            .iter()
            .map(|a| format!("{:.0}m/{:.0}deg {:.1}%", a.meters, a.degrees, 100.0 * a.fraction))
            .collect();
        println!(
            "{:<16} rot {} +/- {} deg  trans {} +/- {} m  {}  ({} skipped)",
            c.label,
            fmt_opt(r.rotation_median, 4),
            fmt_opt(r.rotation_mad, 4),
            fmt_opt(r.translation_median, 3),
            fmt_opt(r.translation_mad, 3),
            acc.join("  "),
            r.skipped
        );
        entries.push(VlEntry {
            label: c.label.clone(),
            report: r,
        });
    }
    std::fs::create_dir_all(&args.out)?;
    io::write_json(
        &args.out.join(out::VL),
        &VlFile {
            created_unix: timestamp(args.timestamp),
            calibrations: entries,
        },
    )?;
    Ok(())
}
