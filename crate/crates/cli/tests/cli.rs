use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lattice_lab::config::ExperimentConfig;
use tempfile::TempDir;

const SMALL: &str = r#"
[lattice]
window_radius = 6

[forcing]
shift_count = 3

[run]
t_final = 2.0
sample_dt = 0.05
n_initial = 3
n_points = 8
settle_time = 6.0
ladder = [1.0, 2.0]
metric_l_max = 10.0
metric_grid_step = 0.05
"#;

fn run(dir: &Path, command: &str, config: &str) -> Output {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_lattice-lab"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn column(csv: &str, j: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(j).unwrap().parse().unwrap()).collect()
}

#[test]
fn headers_are_exact() {
    let dir = TempDir::new().unwrap();
    for cmd in ["simulate", "absorb", "attractor", "hull"] {
        assert_eq!(run(dir.path(), cmd, SMALL).status.code(), Some(0), "{cmd}");
    }
    let first = |name: &str| read(dir.path(), name).lines().next().unwrap().to_string();
    assert_eq!(first("trajectory.csv"), "t,i,u_i");
    assert_eq!(first("energy.csv"), "t,y,envelope");
    assert_eq!(first("sections.csv"), "shift_h,point_id,i,u_i");
    assert_eq!(
        first("entry_times.csv"),
        "run,shift_h,initial_norm_sq,entry_time,max_after_entry,held"
    );
    assert!(first("hull.csv").starts_with("shift_h,"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for cmd in ["simulate", "attractor"] {
        run(a.path(), cmd, SMALL);
        run(b.path(), cmd, SMALL);
    }
    for name in ["trajectory.csv", "energy.csv", "sections.csv", "attractor_report.txt"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn seed_flag_changes_the_sample() {
    let dir = TempDir::new().unwrap();
    run(dir.path(), "simulate", SMALL);
    let before = read(dir.path(), "trajectory.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_lattice-lab"))
        .args(["simulate", "--seed", "99", "--threads", "2", "--config"])
        .arg(dir.path().join("config.toml"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(read(dir.path(), "trajectory.csv"), before);
}

#[test]
fn zero_system_has_zero_energy() {
    let dir = TempDir::new().unwrap();
    // SMALL ends inside the [run] table
    let cfg = format!("{SMALL}initial = \"zero\"\n").replace("[forcing]\n", "[forcing]\nkind = \"zero\"\n");
    let out = run(dir.path(), "simulate", &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let energy = read(dir.path(), "energy.csv");
    assert!(column(&energy, 1).iter().all(|y| *y == 0.0));
    assert!(column(&energy, 2).iter().all(|e| *e == 0.0));
}

#[test]
fn single_shift_hull_is_one_by_one_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = SMALL.replace("shift_count = 3", "shift_count = 1");
    assert_eq!(run(dir.path(), "hull", &cfg).status.code(), Some(0));
    let csv = read(dir.path(), "hull.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').count(), 2);
    assert_eq!(column(&csv, 1), vec![0.0]);
}

#[test]
fn hull_matrix_is_symmetric() {
    let dir = TempDir::new().unwrap();
    run(dir.path(), "hull", SMALL);
    let csv = read(dir.path(), "hull.csv");
    let m: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap()).collect())
        .collect();
    for i in 0..m.len() {
        for j in 0..m.len() {
            assert!((m[i][j] - m[j][i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn absorb_report_labels_both_entry_times() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), "absorb", SMALL).status.code(), Some(0));
    let report = read(dir.path(), "absorb_report.txt");
    assert!(report.contains("entry time (derived"));
    assert!(report.contains("entry time (paper-literal"));
}

#[test]
fn start_inside_ball_enters_at_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = SMALL.replace("n_initial = 3", "n_initial = 3\nseed_ball_radius = 0.5");
    assert_eq!(run(dir.path(), "absorb", &cfg).status.code(), Some(0));
    assert!(column(&read(dir.path(), "entry_times.csv"), 3).iter().all(|t| *t == 0.0));
}

#[test]
fn tails_window_too_small_exits_2_with_minimal_window() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "tails", SMALL);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("window_radius >= 374"), "{stderr}");
}

#[test]
fn tails_start_at_zero_for_interior_data() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
[lattice]
window_radius = 8
[forcing]
kind = "zero"
shift_count = 1
[run]
initial = "unit"
n_initial = 1
seed_ball_radius = 1.0
eps = 0.05
k = 4
t_final = 1.0
"#;
    let out = run(dir.path(), "tails", cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "tails_000.csv");
    assert_eq!(csv.lines().next().unwrap(), "t,weighted_tail,raw_tail,bound");
    assert_eq!(column(&csv, 1)[0], 0.0);
    assert!(read(dir.path(), "tails_report.txt").contains("T(eps)"));
}

#[test]
fn explicit_k_too_large_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "tails", &SMALL.replace("ladder", "k = 4\nladder"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lattice.window_radius"));
}

#[test]
fn linear_unforced_attractor_collapses() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{SMALL}\n[model.nonlinearity]\nkind = \"linear\"\nalpha = 1.0\n")
        .replace("[forcing]\n", "[forcing]\nkind = \"zero\"\n");
    assert_eq!(run(dir.path(), "attractor", &cfg).status.code(), Some(0));
    let sections = read(dir.path(), "sections.csv");
    let coords = column(&sections, 3);
    assert!(!coords.is_empty());
    assert!(coords.iter().all(|x| x.abs() <= 1e-4));
}

#[test]
fn increasing_ladder_is_a_verification_failure() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "attractor", &SMALL.replace("ladder = [1.0, 2.0]", "ladder = [2.0, 0.5]"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL] attraction ladder"));
}

#[test]
fn settle_time_below_minimum_is_refused() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "attractor", &SMALL.replace("settle_time = 6.0", "settle_time = 0.5"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("required minimum"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "simulate", "[run]\nsample_dt = -1.0\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.sample_dt"));
}

#[test]
fn shipped_configs_round_trip() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 3);
    let default = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml"));
    assert_eq!(default.unwrap(), ExperimentConfig::default());
}
