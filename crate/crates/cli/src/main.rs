//! `mgsmooth`: regenerates the tabular experiments, trains and evaluates the
//! path-tracking agents, and runs the gradient checks. Every subcommand writes
//! plain CSV/JSON files into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgsmooth::gradcheck;
use mgsmooth::pathtrack::PathTrackEnv;
use mgsmooth::saac::{
    self, default_sweep_grid, evaluate, metrics_csv, robustness_sweep, sweep_csv, Agent, AgentCheckpoint, Algorithm,
    ConfigError, TrainConfig,
};
use mgsmooth::two_state::run_two_state;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "mgsmooth", version, about = "Smoothed policy iteration and adversarial actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory [default: $MGSMOOTH_OUT, else ./out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed; overrides any seed from --config or --set
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// File of `key=value` lines applied over the desk preset
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single `key=value` override, applied after --config; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-state game tables, PEV traces, NPI cycle, game matrices and bounds
    Tabular,
    /// Train agents; writes metrics and final/best checkpoints per algorithm
    Train {
        /// Algorithms to train (saac, saac-u, rarl, adp, or all)
        #[arg(long, value_delimiter = ',', default_value = "all")]
        algo: Vec<String>,
        /// Keep wall-clock milliseconds in the metrics CSV
        #[arg(long)]
        timing: bool,
    },
    /// Evaluate a checkpoint under a constant disturbance
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        dist: f64,
    },
    /// Evaluate a checkpoint over a grid of disturbances
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `start:step:end` [default: -0.3:0.06:0.3]
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
    },
    /// Finite-difference checks of every differentiated component
    Gradcheck,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<saac::SaacError> for CliError {
    fn from(e: saac::SaacError) -> Self {
        match e {
            saac::SaacError::Config(c) => CliError::Config(c),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(io_err(&path))?;
    Ok(path)
}

fn output_dir(common: &Common) -> Result<PathBuf, CliError> {
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os("MGSMOOTH_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn load_config(common: &Common) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::desk();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        cfg.apply_text(&text)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_algos(names: &[String]) -> Result<Vec<Algorithm>, CliError> {
    let mut out = Vec::new();
    for n in names {
        if n.eq_ignore_ascii_case("all") {
            out.extend(Algorithm::ALL);
        } else {
            out.push(n.parse()?);
        }
    }
    out.dedup();
    Ok(out)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("--grid expects start:step:end, got `{spec}`"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, step, end] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || end < start || !start.is_finite() || !end.is_finite() {
        return Err(bad());
    }
    Ok(saac::grid(start, step, end))
}

fn load_agent(path: &Path, env: &PathTrackEnv) -> Result<Agent, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let ck: AgentCheckpoint =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: not a checkpoint: {e}", path.display())))?;
    Ok(Agent::from_checkpoint(ck, &env.bounds)?)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn run(cli: Cli) -> Result<(), CliError> {
    let env = PathTrackEnv::default();
    match cli.command {
        Command::Tabular => {
            let out = output_dir(&cli.common)?;
            let report = run_two_state().map_err(|e| CliError::Numerical(e.to_string()))?;
            for (name, content) in report.files() {
                let p = write(&out, name, &content)?;
                println!("wrote {}", p.display());
            }
            if let Some(row) = report.bounds.iter().find(|b| !b.holds()) {
                return Err(CliError::Numerical(format!(
                    "{} at rho {} violates its error bound",
                    row.method, row.rho
                )));
            }
        }
        Command::Train { algo, timing } => {
            let base = load_config(&cli.common)?;
            let algos = parse_algos(&algo)?;
            let out = output_dir(&cli.common)?;
            for a in algos {
                let cfg = TrainConfig {
                    algorithm: a,
                    ..base.clone()
                };
                let res = saac::train(&cfg, &env)?;
                write(&out, &format!("config_{a}.txt"), &cfg.to_text())?;
                write(&out, &format!("metrics_{a}.csv"), &metrics_csv(&res.metrics, timing))?;
                write(&out, &format!("checkpoint_{a}.json"), &to_json(&res.agent.checkpoint()))?;
                write(&out, &format!("best_{a}.json"), &to_json(&res.best))?;
                let (first, last) = (&res.metrics[0], res.metrics.last().expect("initial row"));
                println!(
                    "{a}: TAR {:.4} -> {:.4} (best {:.4}), mean |dy| {:.4} -> {:.4}",
                    first.tar, last.tar, res.best_tar, first.pos_err, last.pos_err
                );
            }
        }
        Command::Eval { checkpoint, dist } => {
            let cfg = load_config(&cli.common)?;
            let agent = load_agent(&checkpoint, &env)?;
            let out = output_dir(&cli.common)?;
            let r = evaluate(&agent, &env, cfg.eval_episodes, cfg.eval_steps, cfg.seed, dist)?;
            let doc = json!({
                "disturbance": dist,
                "episodes": cfg.eval_episodes,
                "steps": cfg.eval_steps,
                "seed": cfg.seed,
                "tar": r.tar,
                "pos_err": r.pos_err,
                "head_err": r.head_err,
            });
            write(&out, "eval.json", &to_json(&doc))?;
            println!("TAR {:.6} at disturbance {dist}", r.tar);
        }
        Command::Sweep { checkpoint, grid } => {
            let cfg = load_config(&cli.common)?;
            let points = match grid {
                Some(g) => parse_grid(&g)?,
                None => default_sweep_grid(),
            };
            let agent = load_agent(&checkpoint, &env)?;
            let out = output_dir(&cli.common)?;
            let rows = robustness_sweep(&agent, &env, &points, cfg.eval_episodes, cfg.eval_steps, cfg.seed)?;
            let p = write(&out, "sweep.csv", &sweep_csv(&rows))?;
            println!("wrote {} ({} points)", p.display(), rows.len());
        }
        Command::Gradcheck => {
            let out = output_dir(&cli.common)?;
            let report = gradcheck::run_all(cli.common.seed.unwrap_or(0))
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let csv = report.to_csv();
            write(&out, "gradcheck.csv", &csv)?;
            print!("{csv}");
            let failed = report.failures();
            if !failed.is_empty() {
                let names: Vec<&str> = failed.iter().map(|c| c.name.as_str()).collect();
                return Err(CliError::Numerical(format!("gradient checks failed: {}", names.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
