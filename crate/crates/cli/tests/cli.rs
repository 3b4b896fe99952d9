use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use stereoscale::evaluation::Trajectory;
use stereoscale::geometry::Pose6DoF;
use stereoscale::io;
use stereoscale::DepthMap;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stereoscale"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("run CLI")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn line(n: usize, step: f64) -> Trajectory {
    let motions: Vec<_> = (0..n)
        .map(|_| Pose6DoF::new([0.0, 0.0, -step], [0.0; 3]).to_transform())
        .collect();
    Trajectory::from_motions(&motions)
}

fn arc(n: usize, step: f64) -> Trajectory {
    let motions: Vec<_> = (0..n)
        .map(|_| Pose6DoF::new([0.0, 0.0, -step], [0.0, 0.01, 0.0]).to_transform())
        .collect();
    Trajectory::from_motions(&motions)
}

fn constant_depth(path: &Path, w: usize, h: usize, v: f64) {
    io::write_depth(&DepthMap::constant(w, h, v).unwrap(), path).unwrap();
}

#[test]
fn synth_writes_expected_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["--seed", "5", "--out", p(out), "synth"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let count = |ext: &str| names.iter().filter(|n| n.ends_with(ext)).count();
    assert_eq!(count(".ppm"), 6);
    assert_eq!(count(".pfm"), 6);
    assert!(names.contains(&"poses.txt".to_string()));
    assert!(names.contains(&"manifest.json".to_string()));
    assert_eq!(names.len(), 14);
    for n in &names {
        assert_eq!(
            std::fs::read(a.join(n)).unwrap(),
            std::fs::read(b.join(n)).unwrap(),
            "{n} differs between runs"
        );
    }
    let m = manifest(&a);
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["metrics"]["frames"], 3.0);
}

#[test]
fn invalid_config_key_exits_2_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "width = 64\nbogus_weight = 1\n").unwrap();
    let o = run(&["--config", p(&cfg), "--out", p(&dir.path().join("o")), "synth"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus_weight"), "{}", stderr(&o));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        p(&dir.path().join("o")),
        "optimize",
        "--input",
        p(&dir.path().join("nothing")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("left_000.ppm"), "{}", stderr(&o));
}

#[test]
fn ground_truth_init_on_integer_warp_reaches_floor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gt.cfg");
    // 1 px lateral shift per frame and 4 px stereo disparity: every warp lands on the pixel lattice.
    std::fs::write(
        &cfg,
        "scene = fronto\ndepth = 10\nbaseline = 1.0\nfocal = 40\nframes = 3\n\
         motion = -0.25 0 0 0 0 0\ninit = ground_truth\niterations = 20\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    let est = dir.path().join("est");
    assert!(run(&["--config", p(&cfg), "--out", p(&data), "synth"]).status.success());
    let o = run(&["--config", p(&cfg), "--out", p(&est), "optimize", "--input", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&est);
    let final_loss = m["metrics"]["final_total_loss"].as_f64().unwrap();
    assert!(final_loss <= 1e-5, "final total loss {final_loss}");
    for f in ["poses.txt", "loss.csv", "depth_left_002.pfm", "depth_right_000.pfm"] {
        assert!(est.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(est.join("loss.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn default_five_frame_run_finishes_in_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("five.cfg");
    std::fs::write(&cfg, "frames = 5\n").unwrap();
    let data = dir.path().join("data");
    let est = dir.path().join("est");
    assert!(run(&["--config", p(&cfg), "--out", p(&data), "synth"]).status.success());
    let start = Instant::now();
    let o = run(&["--config", p(&cfg), "--out", p(&est), "optimize", "--input", p(&data)]);
    let elapsed = start.elapsed();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(elapsed < Duration::from_secs(300), "{elapsed:?}");
    assert_eq!(io::read_poses(est.join("poses.txt")).unwrap().len(), 5);
}

#[test]
fn eval_traj_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("poses.txt");
    io::write_poses(&line(150, 1.0), &path).unwrap();
    let out = dir.path().join("o");
    let o = run(&["--out", p(&out), "eval-traj", "--estimate", p(&path), "--reference", p(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("t_rel: 0.00 %"), "{text}");
    assert!(text.contains("r_rel: 0.00 deg/100m"), "{text}");

    let svg = std::fs::read_to_string(out.join("trajectory.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert_eq!(svg.matches("class=\"scale-bar\"").count(), 1);
    assert!(std::fs::read_to_string(out.join("drift.csv")).unwrap().starts_with("length,"));
    assert_eq!(manifest(&out)["metrics"]["t_rel_percent"], 0.0);
}

#[test]
fn eval_traj_constructed_drift_and_similarity_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let (est, gt) = (dir.path().join("est.txt"), dir.path().join("gt.txt"));
    io::write_poses(&line(300, 1.01), &est).unwrap();
    io::write_poses(&line(300, 1.0), &gt).unwrap();
    let out = dir.path().join("o");
    let o = run(&["--out", p(&out), "eval-traj", "--estimate", p(&est), "--reference", p(&gt)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t_rel = manifest(&out)["metrics"]["t_rel_percent"].as_f64().unwrap();
    assert!((t_rel - 1.0).abs() <= 0.01, "{t_rel}");

    io::write_poses(&arc(300, 1.01), &est).unwrap();
    io::write_poses(&arc(300, 1.0), &gt).unwrap();
    let o = run(&[
        "--out",
        p(&out),
        "eval-traj",
        "--estimate",
        p(&est),
        "--reference",
        p(&gt),
        "--align",
        "7dof",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t_rel = manifest(&out)["metrics"]["t_rel_percent"].as_f64().unwrap();
    assert!(t_rel < 1e-6, "{t_rel}");
}

#[test]
fn eval_traj_too_short_is_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("poses.txt");
    io::write_poses(&line(10, 1.0), &path).unwrap();
    let o = run(&["eval-traj", "--estimate", p(&path), "--reference", p(&path)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("too short"), "{}", stderr(&o));
}

#[test]
fn eval_depth_identical_directories() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(run(&["--out", p(&data), "synth"]).status.success());
    let out = dir.path().join("o");
    let o = run(&["--out", p(&out), "eval-depth", "--pred", p(&data), "--gt", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("depth_metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 7);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        for v in &f[1..5] {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{row}");
        }
    }
}

#[test]
fn eval_depth_rows_aggregate_and_empty_mask() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    constant_depth(&pred.join("a.pfm"), 4, 3, 10.0);
    constant_depth(&gt.join("a.pfm"), 4, 3, 11.0);
    constant_depth(&pred.join("b.pfm"), 4, 3, 25.0);
    constant_depth(&gt.join("b.pfm"), 4, 3, 20.0);
    // Beyond the cap everywhere, so this frame has no valid pixels.
    constant_depth(&pred.join("c.pfm"), 4, 3, 90.0);
    constant_depth(&gt.join("c.pfm"), 4, 3, 95.0);

    let out = dir.path().join("o");
    let o = run(&["--out", p(&out), "eval-depth", "--pred", p(&pred), "--gt", p(&gt)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("depth_metrics.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 3, "{csv}");
    let get = |r: usize, c: usize| rows[r][c].parse::<f64>().unwrap();
    assert!(rows[0][0].starts_with('a'));
    assert!((get(0, 1) - 1.0 / 11.0).abs() < 1e-12);
    assert!((get(1, 1) - 0.25).abs() < 1e-12);
    assert_eq!(rows[2][0], "mean");
    for c in 1..5 {
        assert!((get(2, c) - (get(0, c) + get(1, c)) / 2.0).abs() <= 1e-12);
    }
}

#[test]
fn eval_depth_ten_versus_eleven() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    // abs_rel is |pred - gt| / gt, so 11 vs 10 gives exactly 0.1.
    constant_depth(&pred.join("f.pfm"), 8, 4, 11.0);
    constant_depth(&gt.join("f.pfm"), 8, 4, 10.0);
    let out = dir.path().join("o");
    let o = run(&["--out", p(&out), "eval-depth", "--pred", p(&pred), "--gt", p(&gt)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("depth_metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!((row[1].parse::<f64>().unwrap() - 0.1).abs() < 1e-12, "{csv}");
}

#[test]
fn eval_depth_all_frames_empty_is_numerical() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    constant_depth(&pred.join("f.pfm"), 2, 2, 5.0);
    constant_depth(&gt.join("f.pfm"), 2, 2, 5.0);
    let o = run(&["eval-depth", "--pred", p(&pred), "--gt", p(&gt), "--cap", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
