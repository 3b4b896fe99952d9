use std::path::{Path, PathBuf};

use stereoscale::evaluation::{
    align, depth_metrics_raw, drift_metrics, position_rmse, DepthEvalReport, Trajectory,
};
use stereoscale::geometry::Pose6DoF;
use stereoscale::imagegrid::ImageBuffer;
use stereoscale::io::{self, Config, InitMode};
use stereoscale::losses::{PosePair, StereoDepths, StereoFrame};
use stereoscale::optimizer::optimize_joint;
use stereoscale::synthworld::render_sequence;
use stereoscale::{DepthMap, Error, Result};

use crate::manifest::RunManifest;
use crate::{svg, Cli, Command};

/// PPM sample depth for rendered images.
const IMAGE_MAXVAL: u16 = 65535;

pub const POSES_FILE: &str = "poses.txt";
pub const LOSS_FILE: &str = "loss.csv";
pub const DRIFT_FILE: &str = "drift.csv";
pub const PLOT_FILE: &str = "trajectory.svg";
pub const DEPTH_REPORT_FILE: &str = "depth_metrics.csv";

pub fn left_image(k: usize) -> String {
    format!("left_{k:03}.ppm")
}

pub fn right_image(k: usize) -> String {
    format!("right_{k:03}.ppm")
}

pub fn left_depth(k: usize) -> String {
    format!("depth_left_{k:03}.pfm")
}

pub fn right_depth(k: usize) -> String {
    format!("depth_right_{k:03}.pfm")
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    let dir = cli
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--out is required for this command".into()))?;
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.into(),
        source,
    })?;
    Ok(dir)
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|source| Error::Io { path, source })
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth => synth(&cfg, out_dir(cli)?),
        Command::Optimize { input } => optimize(&cfg, input, out_dir(cli)?),
        Command::EvalTraj {
            estimate,
            reference,
            align,
        } => eval_traj(&cfg, estimate, reference, *align, cli.out.as_deref()),
        Command::EvalDepth {
            pred,
            gt,
            cap,
            median_scale,
        } => eval_depth(&cfg, pred, gt, *cap, *median_scale, cli.out.as_deref()),
    }
}

fn synth(cfg: &Config, out: &Path) -> Result<()> {
    let spec = cfg.scene_spec()?;
    let frames = render_sequence(&spec, &cfg.motions())?;
    let mut manifest = RunManifest::new("synth", cfg);
    for (k, f) in frames.iter().enumerate() {
        let files = [left_image(k), right_image(k), left_depth(k), right_depth(k)];
        io::write_image(&f.left, out.join(&files[0]), IMAGE_MAXVAL)?;
        io::write_image(&f.right, out.join(&files[1]), IMAGE_MAXVAL)?;
        io::write_depth(&f.gt_depth_left, out.join(&files[2]))?;
        io::write_depth(&f.gt_depth_right, out.join(&files[3]))?;
        manifest.outputs.extend(files);
    }
    let traj = Trajectory::new(frames.iter().map(|f| f.camera_pose_world).collect())?;
    io::write_poses(&traj, out.join(POSES_FILE))?;
    manifest.outputs.push(POSES_FILE.into());
    manifest.metrics.insert("frames".into(), frames.len() as f64);
    let path_length = traj.path_lengths().last().copied().unwrap_or(0.0);
    manifest.metrics.insert("path_length_m".into(), path_length);
    manifest.write(out)?;
    println!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

fn read_frames(cfg: &Config, input: &Path) -> Result<Vec<StereoFrame>> {
    let mut frames = Vec::new();
    loop {
        let k = frames.len();
        let left_path = input.join(left_image(k));
        if k > 0 && !left_path.exists() {
            break;
        }
        let left = io::read_image(&left_path)?;
        let right = io::read_image(input.join(right_image(k)))?;
        check_shape(cfg, &left)?;
        check_shape(cfg, &right)?;
        frames.push(StereoFrame { left, right });
    }
    Ok(frames)
}

fn check_shape(cfg: &Config, img: &ImageBuffer) -> Result<()> {
    if img.width() != cfg.width || img.height() != cfg.height {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} (from configuration)", cfg.width, cfg.height),
            actual: format!("{}x{}", img.width(), img.height()),
        });
    }
    Ok(())
}

fn scaled(d: &DepthMap, s: f64) -> Result<DepthMap> {
    DepthMap::new(d.width(), d.height(), d.data().iter().map(|x| x * s).collect())
}

fn initial_state(
    cfg: &Config,
    input: &Path,
    n: usize,
) -> Result<(Vec<StereoDepths>, Vec<PosePair>)> {
    if cfg.init == InitMode::Flat {
        let flat = DepthMap::constant(cfg.width, cfg.height, cfg.init_depth)?;
        let depths = vec![
            StereoDepths {
                left: flat.clone(),
                right: flat,
            };
            n
        ];
        return Ok((depths, vec![PosePair::both(Pose6DoF::identity()); n - 1]));
    }
    let (depth_scale, tz_offset) = match cfg.init {
        InitMode::Perturbed => (cfg.init_depth_scale, cfg.init_pose_offset),
        _ => (1.0, 0.0),
    };
    let mut depths = Vec::with_capacity(n);
    for k in 0..n {
        let left = io::read_depth(input.join(left_depth(k)))?;
        let right = io::read_depth(input.join(right_depth(k)))?;
        depths.push(StereoDepths {
            left: scaled(&left, depth_scale)?,
            right: scaled(&right, depth_scale)?,
        });
    }
    let traj = io::read_poses(input.join(POSES_FILE))?;
    if traj.len() != n {
        return Err(Error::LengthMismatch(n, traj.len()));
    }
    let poses = traj
        .motions()
        .iter()
        .map(|m| {
            let mut p = Pose6DoF::from_transform(m);
            p.translation.z += tz_offset;
            PosePair::both(p)
        })
        .collect();
    Ok((depths, poses))
}

fn optimize(cfg: &Config, input: &Path, out: &Path) -> Result<()> {
    let frames = read_frames(cfg, input)?;
    let (init_depths, init_poses) = initial_state(cfg, input, frames.len().max(2))?;
    let rig = cfg.rig()?;
    let est = optimize_joint(
        &frames,
        &init_depths,
        &init_poses,
        &rig,
        &cfg.weights,
        &cfg.schedule,
    )?;

    let mut manifest = RunManifest::new("optimize", cfg);
    manifest.inputs = (0..frames.len())
        .flat_map(|k| [left_image(k), right_image(k)])
        .map(|f| input.join(f).display().to_string())
        .collect();
    for (k, d) in est.depths.iter().enumerate() {
        io::write_depth(&d.left, out.join(left_depth(k)))?;
        io::write_depth(&d.right, out.join(right_depth(k)))?;
        manifest.outputs.extend([left_depth(k), right_depth(k)]);
    }
    let motions: Vec<_> = est.poses.iter().map(|p| p.left.to_transform()).collect();
    io::write_poses(&Trajectory::from_motions(&motions), out.join(POSES_FILE))?;
    write_text(out.join(LOSS_FILE), &est.history.to_csv())?;
    manifest.outputs.extend([POSES_FILE.into(), LOSS_FILE.into()]);

    let m = &mut manifest.metrics;
    if let Some(first) = est.history.initial() {
        m.insert("initial_total_loss".into(), first);
    }
    if let Some(best) = est
        .history
        .records
        .iter()
        .min_by(|a, b| a.total.total_cmp(&b.total))
    {
        m.insert("final_total_loss".into(), best.total);
        for (name, v) in stereoscale::losses::LossBreakdown::NAMES
            .iter()
            .zip(best.breakdown.as_array())
        {
            m.insert(format!("final_{name}"), v);
        }
    }
    m.insert("iterations".into(), est.iterations as f64);
    m.insert("converged".into(), if est.converged { 1.0 } else { 0.0 });
    let (ct, co) = est
        .consistency
        .iter()
        .fold((0.0f64, 0.0f64), |(a, b), &(t, o)| (a.max(t), b.max(o)));
    m.insert("max_pose_consistency_translation_m".into(), ct);
    m.insert("max_pose_consistency_rotation_rad".into(), co);
    manifest.write(out)?;
    println!(
        "{} frames, {} iterations, final total loss {:e}",
        frames.len(),
        est.iterations,
        manifest.metrics.get("final_total_loss").copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn eval_traj(
    cfg: &Config,
    estimate: &Path,
    reference: &Path,
    mode: stereoscale::evaluation::Alignment,
    out: Option<&Path>,
) -> Result<()> {
    let est = io::read_poses(estimate)?;
    let gt = io::read_poses(reference)?;
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch(est.len(), gt.len()));
    }
    let (aligned, sim) = align(&est, &gt, mode)?;
    let mut manifest = RunManifest::new("eval-traj", cfg);
    manifest.inputs = vec![estimate.display().to_string(), reference.display().to_string()];
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.into(),
            source,
        })?;
        write_text(dir.join(PLOT_FILE), &svg::trajectory_plot(&aligned, &gt))?;
        manifest.outputs.push(PLOT_FILE.into());
    }
    let report = drift_metrics(&aligned, &gt)?;
    print!("{}", report.to_text());
    if let Some(dir) = out {
        write_text(dir.join(DRIFT_FILE), &report.to_csv())?;
        manifest.outputs.push(DRIFT_FILE.into());
        let m = &mut manifest.metrics;
        m.insert("t_rel_percent".into(), report.t_rel);
        m.insert("r_rel_deg_per_100m".into(), report.r_rel);
        m.insert("segments".into(), report.segments.len() as f64);
        m.insert("alignment_scale".into(), sim.scale);
        m.insert("position_rmse_m".into(), position_rmse(&aligned, &gt)?);
        manifest.write(dir)?;
    }
    Ok(())
}

fn pfm_files(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.into(),
        source,
    })?;
    let mut names = Vec::new();
    for e in entries {
        let e = e.map_err(|source| Error::Io {
            path: dir.into(),
            source,
        })?;
        let name = e.file_name().to_string_lossy().into_owned();
        if name.ends_with(".pfm") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn read_single_channel(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let (w, h, c, data) = io::read_pfm(path)?;
    if c != 1 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            message: "depth maps are single-channel (Pf)".into(),
        });
    }
    Ok((w, h, data))
}

/// Mean of each metric over frames; pixel counts are summed.
pub fn aggregate(reports: &[DepthEvalReport]) -> DepthEvalReport {
    let n = reports.len() as f64;
    let mean = |f: fn(&DepthEvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    DepthEvalReport {
        abs_rel: mean(|r| r.abs_rel),
        sq_rel: mean(|r| r.sq_rel),
        rmse: mean(|r| r.rmse),
        rmse_log: mean(|r| r.rmse_log),
        pixels: reports.iter().map(|r| r.pixels).sum(),
    }
}

fn eval_depth(
    cfg: &Config,
    pred: &Path,
    gt: &Path,
    cap: f64,
    median_scale: bool,
    out: Option<&Path>,
) -> Result<()> {
    if !(cap > 0.0) {
        return Err(Error::InvalidArgument(format!("--cap must be positive, got {cap}")));
    }
    let names = pfm_files(gt)?;
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .pfm files in {}",
            gt.display()
        )));
    }
    let mut rows = Vec::new();
    for name in &names {
        let (gw, gh, g) = read_single_channel(&gt.join(name))?;
        let (pw, ph, p) = read_single_channel(&pred.join(name))?;
        if (gw, gh) != (pw, ph) {
            return Err(Error::DimensionMismatch {
                expected: format!("{gw}x{gh} ({name})"),
                actual: format!("{pw}x{ph}"),
            });
        }
        match depth_metrics_raw(&p, &g, cap, median_scale) {
            Ok(r) => rows.push((name.clone(), r)),
            Err(Error::EmptyMask) => log::warn!("{name}: no ground-truth pixels within the cap, skipped"),
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyMask);
    }
    let reports: Vec<DepthEvalReport> = rows.iter().map(|(_, r)| *r).collect();
    let mean = aggregate(&reports);
    let mut csv = format!("frame,{}\n", DepthEvalReport::CSV_HEADER);
    for (name, r) in &rows {
        csv.push_str(&format!("{name},{}\n", r.to_csv_row()));
    }
    csv.push_str(&format!("mean,{}\n", mean.to_csv_row()));
    print!("{csv}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.into(),
            source,
        })?;
        write_text(dir.join(DEPTH_REPORT_FILE), &csv)?;
        let mut manifest = RunManifest::new("eval-depth", cfg);
        manifest.inputs = vec![pred.display().to_string(), gt.display().to_string()];
        manifest.outputs.push(DEPTH_REPORT_FILE.into());
        let m = &mut manifest.metrics;
        m.insert("abs_rel".into(), mean.abs_rel);
        m.insert("sq_rel".into(), mean.sq_rel);
        m.insert("rmse".into(), mean.rmse);
        m.insert("rmse_log".into(), mean.rmse_log);
        m.insert("frames".into(), rows.len() as f64);
        m.insert("cap".into(), cap);
        m.insert("median_scale".into(), if median_scale { 1.0 } else { 0.0 });
        manifest.write(dir)?;
    }
    Ok(())
}
