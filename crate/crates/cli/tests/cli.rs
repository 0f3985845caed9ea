//! Runs the built binary: output files, determinism and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mgsmooth::pathtrack::PathTrackEnv;
use mgsmooth::saac::{Agent, AgentCheckpoint, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SHORT_RUN: [&str; 10] = [
    "--set",
    "iterations=40",
    "--set",
    "eval_interval=20",
    "--set",
    "warmup=150",
    "--set",
    "updates_per_episode=20",
    "--set",
    "batch_size=32",
];

fn mgsmooth(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgsmooth"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("MGSMOOTH_OUT")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn tabular_writes_every_artifact_deterministically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&mgsmooth(&["tabular"], a.path()));
    ok(&mgsmooth(&["tabular"], b.path()));
    let files = read_dir_sorted(a.path());
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["bounds.csv", "matrices.json", "npi_cycle.json", "pev_trace.csv", "table1.csv", "table2.csv"]
    );
    assert_eq!(files, read_dir_sorted(b.path()));

    let table1 = read(a.path(), "table1.csv");
    assert!(table1.starts_with("method,rho,value,pct_error\n"));
    assert!(table1.contains("SPI,1,-7.62437,8.91962"));
    let cycle: serde_json::Value = serde_json::from_str(&read(a.path(), "npi_cycle.json")).unwrap();
    assert_eq!(cycle["period"], 2);
    let bounds = read(a.path(), "bounds.csv");
    assert!(bounds.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn output_directory_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nested");
    let o = Command::new(env!("CARGO_BIN_EXE_mgsmooth"))
        .arg("tabular")
        .env("MGSMOOTH_OUT", &target)
        .output()
        .unwrap();
    ok(&o);
    assert!(target.join("table1.csv").exists());
}

#[test]
fn train_then_eval_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args = vec!["train", "--algo", "adp,saac", "--seed", "3"];
    args.extend(SHORT_RUN);
    ok(&mgsmooth(&args, d));
    for algo in ["adp", "saac"] {
        let metrics = read(d, &format!("metrics_{algo}.csv"));
        assert_eq!(metrics.lines().count(), 4);
        assert!(metrics.lines().skip(1).all(|l| l.ends_with(",0")));
        assert!(read(d, &format!("config_{algo}.txt")).contains("seed=3\n"));
    }

    // No adversary is ever updated without one in the algorithm.
    let ck: AgentCheckpoint = serde_json::from_str(&read(d, "checkpoint_adp.json")).unwrap();
    let mut cfg = TrainConfig::desk();
    cfg.algorithm = "adp".parse().unwrap();
    cfg.seed = 3;
    let fresh = Agent::new(&cfg, &PathTrackEnv::default().bounds, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(ck.adversary, fresh.adversary);
    assert_ne!(ck.protagonist, fresh.protagonist);

    let ckpt = d.join("best_saac.json");
    let ckpt = ckpt.to_str().unwrap();
    ok(&mgsmooth(&["eval", "--checkpoint", ckpt, "--dist", "-0.3"], d));
    let eval: serde_json::Value = serde_json::from_str(&read(d, "eval.json")).unwrap();
    assert!(eval["tar"].as_f64().unwrap().is_finite());
    assert_eq!(eval["disturbance"], -0.3);

    ok(&mgsmooth(&["sweep", "--checkpoint", ckpt, "--grid", "-0.3:0.06:0.3"], d));
    let sweep = read(d, "sweep.csv");
    assert_eq!(sweep.lines().count(), 12);
    assert!(sweep.starts_with("disturbance,tar,pos_err,head_err\n-0.3,"));
    ok(&mgsmooth(&["sweep", "--checkpoint", ckpt], d));
    assert_eq!(read(d, "sweep.csv"), sweep);
}

#[test]
fn training_output_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut args = vec!["train", "--algo", "saac-u,rarl"];
    args.extend(SHORT_RUN);
    ok(&mgsmooth(&args, a.path()));
    ok(&mgsmooth(&args, b.path()));
    assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(b.path()));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# short run\niterations = 20\neval_interval=10\nwarmup=150\nseed=9\n").unwrap();
    let out = dir.path().join("o");
    ok(&mgsmooth(
        &["train", "--algo", "adp", "--config", cfg.to_str().unwrap(), "--set", "updates_per_episode=10"],
        &out,
    ));
    let text = read(&out, "config_adp.txt");
    assert!(text.contains("iterations=20\n") && text.contains("seed=9\n") && text.contains("updates_per_episode=10\n"));
    assert_eq!(read(&out, "metrics_adp.csv").lines().count(), 4);
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = mgsmooth(&["gradcheck"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path(), "gradcheck.csv");
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: [&[&str]; 7] = [
        &["frobnicate"],
        &["train", "--set", "no_such_key=1"],
        &["train", "--set", "gamma=lots"],
        &["train", "--set", "gamma=1.5"],
        &["train", "--algo", "sac"],
        &["sweep", "--checkpoint", "missing.json"],
        &["sweep", "--checkpoint", "x.json", "--grid", "0.3:0.1"],
    ];
    for args in cases {
        assert_eq!(mgsmooth(args, d).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(mgsmooth(&["--help"], d).status.code(), Some(0));
}

#[test]
fn overflowing_training_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // Critic outputs scaled past the f64 range make the loss infinite.
    let mut args = vec!["train", "--algo", "saac", "--set", "value_scale=1e300"];
    args.extend(SHORT_RUN);
    let o = mgsmooth(&args, dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
