use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use optlab::harness::analysis::{self, DEFAULT_WINDOW};
use optlab::harness::config::RunConfig;
use optlab::harness::oracle::{option_value_iteration, TabularOptionProblem};
use optlab::harness::run;
use optlab::{Error, Result};

#[derive(Parser)]
#[command(name = "optlab", version, about = "Option-based policy transfer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seed range, one child process per seed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive range `a..b`.
        #[arg(long)]
        seeds: String,
        /// Parent directory for the per-seed run directories.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Concurrent child processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Median and IQR across seeds of a windowed episode metric.
    Compare {
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
    },
    /// Smoothed per-run series as CSV.
    Plotdata {
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
    },
    /// Exact option values of a tabular problem given as JSON.
    Oracle { spec: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Serialize)]
struct OracleOutput {
    q: Vec<Vec<f64>>,
}

fn parse_seeds(s: &str) -> Result<std::ops::RangeInclusive<u64>> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::usage(format!("seed range must look like a..b, got {s:?}")))?;
    let parse = |x: &str| x.trim().parse::<u64>().map_err(|e| Error::usage(format!("bad seed {x:?}: {e}")));
    let (a, b) = (parse(a)?, parse(b)?);
    if a > b {
        return Err(Error::usage(format!("empty seed range {s}")));
    }
    Ok(a..=b)
}

fn sweep(config: &Path, seeds: &str, out: &Path, jobs: usize) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let exe = std::env::current_exe()?;
    let mut queue: Vec<u64> = parse_seeds(seeds)?.rev().collect();
    let mut running = Vec::new();
    let mut failed = Vec::new();
    while !queue.is_empty() || !running.is_empty() {
        while running.len() < jobs.max(1) {
            let Some(seed) = queue.pop() else { break };
            let dir = out.join(format!("{}-{}-s{seed}", cfg.scenario.name(), cfg.advisor.name()));
            log::info!("seed {seed} -> {}", dir.display());
            let child = Command::new(&exe)
                .arg("run")
                .arg("--config")
                .arg(config)
                .arg("--seed")
                .arg(seed.to_string())
                .arg("--out")
                .arg(&dir)
                .spawn()?;
            running.push((seed, child));
        }
        let (seed, mut child) = running.remove(0);
        if !child.wait()?.success() {
            failed.push(seed);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::config(format!("runs failed for seeds {failed:?}")))
    }
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out.unwrap_or_else(|| run::default_out_dir(&cfg));
            let summary = run::run(&cfg, &out)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Cmd::Sweep { config, seeds, out, jobs } => sweep(&config, &seeds, &out, jobs)?,
        Cmd::Compare { metric, window, format, dirs } => {
            let table = analysis::compare(&dirs, &metric, window)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&table)?),
                Format::Tsv => print!("{}", table.to_tsv()),
            }
        }
        Cmd::Plotdata { metric, window, output, dirs } => {
            let csv = analysis::plot_data(&dirs, &metric, window)?;
            match output {
                Some(p) => std::fs::write(p, csv)?,
                None => print!("{csv}"),
            }
        }
        Cmd::Oracle { spec } => {
            let text = std::fs::read_to_string(&spec)?;
            let problem: TabularOptionProblem = serde_json::from_str(&text)?;
            let q = option_value_iteration(&problem, problem.mask_agent)?;
            println!("{}", serde_json::to_string(&OracleOutput { q })?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let record = Error::usage(e.render().to_string().trim().to_string()).record();
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_default());
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record()).unwrap_or_default());
            ExitCode::from(if matches!(e, Error::Usage(_) | Error::Config(_) | Error::Parse { .. }) { 2 } else { 1 })
        }
    }
}
