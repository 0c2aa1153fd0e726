//! Command-line front end for `dflsim-core`.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on configuration failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use dflsim_core::oracle::{self, OracleReport};
use dflsim_core::simulator::{build_topology, ExperimentConfig, Simulation, SimulationError};
use thiserror::Error;

pub mod config;
pub mod output;

use output::write_atomic;

#[derive(Debug, Parser)]
#[command(name = "dflsim", version, about = "Decentralized federated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Override the master seed (or the oracle seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Output does not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the communication graph and write it as an edge list.
    Topology {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment and write per-node and summary CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment per value of the single array-valued config field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check kernels against brute-force references.
    Oracle {
        #[arg(value_enum)]
        which: OracleKind,
        /// Where to write a failing instance.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Krum,
    Geomed,
    Grad,
    All,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("oracle mismatch: {0}")]
    Oracle(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Oracle(_) => 1,
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    write_atomic(path, contents).map_err(|e| io_error(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads.unwrap_or_else(default_threads);
    if threads == 0 {
        return Err(CliError::Config("--threads must be >= 1".into()));
    }
    match cli.command {
        Command::Topology { config, out } => cmd_topology(&config, &out, cli.seed),
        Command::Run { config, out } => {
            let cfg = config::load_config(&config, cli.seed)?;
            let final_acc = cmd_run(&cfg, &out, threads)?;
            println!("final honest mean accuracy {final_acc:.6}");
            Ok(())
        }
        Command::Sweep { config, out } => cmd_sweep(&config, &out, cli.seed, threads),
        Command::Oracle { which, out } => cmd_oracle(which, cli.seed, out.as_deref()),
    }
}

pub fn cmd_topology(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let cfg = config::load_config(config, seed)?.resolved();
    let (graph, log) = build_topology(&cfg.topology, cfg.topology.seed.unwrap_or_default())?;
    if !graph.is_connected() {
        log::warn!("generated graph is disconnected");
    }
    create_dir(out)?;
    write_file(&out.join(output::GRAPH_FILE), graph.to_edge_list_string().as_bytes())?;
    if let Some(log) = log {
        let mut text = Vec::new();
        log.write_text(&mut text).map_err(|e| io_error(out, e))?;
        write_file(&out.join(output::REWIRE_FILE), &text)?;
    }
    println!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
    Ok(())
}

/// Runs `cfg` and writes the run directory. Returns the final honest mean accuracy.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<f64, CliError> {
    let mut sim = Simulation::new(cfg)?.with_threads(threads)?;
    create_dir(out)?;

    let byzantine: Vec<usize> = sim.plan().byzantine.iter().copied().collect();
    let resolved = toml::to_string(sim.config()).map_err(|e| CliError::Runtime(e.to_string()))?;
    let echo = format!("# byzantine nodes: {byzantine:?}\n{resolved}");
    write_file(&out.join(output::RESOLVED_CONFIG), echo.as_bytes())?;
    let plan = toml::to_string(sim.plan()).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&out.join(output::ADVERSARY_FILE), plan.as_bytes())?;

    let mut metrics = Vec::with_capacity(sim.config().rounds);
    for _ in 0..sim.config().rounds {
        metrics.push(sim.run_round()?);
    }
    write_file(&out.join(output::PER_NODE_CSV), output::per_node_csv(&metrics).as_bytes())?;
    write_file(&out.join(output::SUMMARY_CSV), output::summary_csv(&metrics).as_bytes())?;
    Ok(metrics.last().map_or(0.0, |m| m.honest_mean_accuracy))
}

pub fn cmd_sweep(config: &Path, out: &Path, seed: Option<u64>, threads: usize) -> Result<(), CliError> {
    let doc = config::read_document(config)?;
    let (axis, points) = config::expand_sweep(doc, seed)?;
    log::info!("sweeping {} over {} values", axis.key, points.len());
    create_dir(out)?;
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        let dir = out.join(format!("point_{:03}", p.index));
        let acc = cmd_run(&p.config, &dir, threads)?;
        rows.push((p.value.clone(), acc));
    }
    rows.sort_by(|a, b| config::compare_values(&a.0, &b.0));
    let mut csv = String::from("param_value,final_honest_mean_accuracy\n");
    for (v, acc) in &rows {
        csv.push_str(&format!("{},{acc:.6}\n", config::display_value(v)));
    }
    write_file(&out.join(output::SWEEP_CSV), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

/// Runs the selected oracle batches at their standard sizes.
pub fn oracle_reports(which: OracleKind, seed: u64) -> Vec<OracleReport> {
    let mut out = Vec::new();
    if matches!(which, OracleKind::Krum | OracleKind::All) {
        out.push(oracle::run_krum_oracle(oracle::KRUM_INSTANCES, seed));
    }
    if matches!(which, OracleKind::Geomed | OracleKind::All) {
        out.push(oracle::run_geomed_oracle(oracle::GEOMED_INSTANCES, seed));
    }
    if matches!(which, OracleKind::Grad | OracleKind::All) {
        out.push(oracle::run_grad_oracle(oracle::GRAD_INSTANCES, seed));
    }
    out
}

pub fn cmd_oracle(which: OracleKind, seed: Option<u64>, out: Option<&Path>) -> Result<(), CliError> {
    let seed = seed.unwrap_or(oracle::DEFAULT_ORACLE_SEED);
    let mut failed = Vec::new();
    for report in oracle_reports(which, seed) {
        if which == OracleKind::All {
            println!("{} {}", report.name, report.summary());
        } else {
            println!("{}", report.summary());
        }
        if let Some(instance) = &report.first_failure {
            let text = toml::to_string(instance).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("# failing {} instance (seed {seed})\n{text}", report.name);
            if let Some(dir) = out {
                create_dir(dir)?;
                write_file(&dir.join(format!("oracle_{}_failure.toml", report.name)), text.as_bytes())?;
            }
            failed.push(report.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Oracle(failed.join(", ")))
    }
}
