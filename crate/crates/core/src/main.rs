use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use nelsonlab::config::{ConfigError, Experiment, ExperimentConfig, Tolerances};
use nelsonlab::experiments::{self, Measurement, Status};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Run,
    Validate,
}

/// Reproducible runner for the Nelson-model experiments.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// `run` (default) or `validate`.
    #[arg(value_enum)]
    command: Option<Command>,
    /// Experiment to run; overrides the config file.
    #[arg(long)]
    experiment: Option<String>,
    /// Configuration file (flat `key = value` with [model], [sweep], [tolerances]).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the experiment names and exit.
    #[arg(long)]
    list: bool,
    /// Check the configuration and guards without running.
    #[arg(long)]
    validate: bool,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    experiment: Experiment,
    status: &'static str,
    seed: u64,
    config_hash: String,
    wall_clock_seconds: f64,
    threads: usize,
    passed: usize,
    failed: usize,
    informational: usize,
    tolerances: &'a Tolerances,
    checks: &'a [Measurement],
}

fn fail(e: &ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &cli.experiment {
        cfg.experiment = Some(
            name.parse()
                .map_err(|m| ConfigError::Invalid { key: "--experiment".into(), message: m })?,
        );
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn results_csv(rows: &[Measurement]) -> String {
    let mut out = String::from(Measurement::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// One panel per check that was measured more than once, in table order.
fn plot_script(experiment: Experiment, rows: &[Measurement]) -> String {
    let mut groups: BTreeMap<&str, usize> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        let n = groups.entry(r.check.as_str()).or_insert(0);
        if *n == 0 {
            order.push(r.check.as_str());
        }
        *n += 1;
    }
    let series: Vec<&str> = order.into_iter().filter(|c| groups[c] > 1).collect();
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script for {experiment}; run from the output directory: gnuplot plot.gp");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 900,{}", 300 * series.len().max(1));
    let _ = writeln!(s, "set output '{experiment}.png'");
    let _ = writeln!(s, "set key off");
    let _ = writeln!(s, "set logscale y");
    let _ = writeln!(s, "set xlabel 'measurement (table order)'");
    let _ = writeln!(s, "set multiplot layout {},1", series.len().max(1));
    for check in &series {
        let quoted = check.replace('\'', "");
        let _ = writeln!(s, "set title '{quoted}' noenhanced");
        let _ = writeln!(s, "k = 0");
        let _ = writeln!(
            s,
            "plot 'results.csv' every ::1 using (stringcolumn(2) eq '{quoted}' ? (k = k + 1) : 1/0):(abs($4)) with linespoints pt 7"
        );
    }
    if series.is_empty() {
        let _ = writeln!(s, "plot 'results.csv' every ::1 using 0:(abs($4)) with points pt 7");
    }
    let _ = writeln!(s, "unset multiplot");
    s
}

fn write_outputs(dir: &Path, experiment: Experiment, rows: &[Measurement], summary: &RunSummary<'_>) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), results_csv(rows))?;
    let json = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    fs::write(dir.join("plot.gp"), plot_script(experiment, rows))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list {
        for e in Experiment::ALL {
            println!("{e}");
        }
        return ExitCode::SUCCESS;
    }
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    if cli.validate || matches!(cli.command, Some(Command::Validate)) {
        print!("{}", cfg.render());
        println!("# config hash {}", cfg.hash());
        return ExitCode::SUCCESS;
    }
    let Some(experiment) = cfg.experiment else {
        return fail(&ConfigError::Invalid {
            key: "experiment".into(),
            message: "no experiment selected; pass --experiment or set it in the config (see --list)".into(),
        });
    };
    let threads = cli.threads.unwrap_or(0);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("warning: thread pool already initialized: {e}");
    }

    let start = Instant::now();
    let rows = match experiments::run(experiment, &cfg) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let count = |s: Status| rows.iter().filter(|r| r.status == s).count();
    let failed = count(Status::Fail);
    let summary = RunSummary {
        experiment,
        status: if failed == 0 { "PASS" } else { "FAIL" },
        seed: cfg.seed,
        config_hash: cfg.hash(),
        wall_clock_seconds: wall,
        threads: rayon::current_num_threads(),
        passed: count(Status::Pass),
        failed,
        informational: count(Status::Info),
        tolerances: &cfg.tolerances,
        checks: &rows,
    };
    if let Err(e) = write_outputs(&cfg.output, experiment, &rows, &summary) {
        eprintln!("error: cannot write to {}: {e}", cfg.output.display());
        return ExitCode::from(2);
    }
    for r in rows.iter().filter(|r| r.status != Status::Info) {
        println!("{} {} [{}]", r.status, r.check, r.parameters);
    }
    println!(
        "{experiment}: {} passed, {failed} failed in {wall:.2} s; results in {}",
        summary.passed,
        cfg.output.display()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
