//! `vortexlab`: command-line driver for the two-bubble numerical lab.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use vortexlab::ansatz::ProjectionMode;
use vortexlab::io::{load_config, ConfigError, Report, RunConfig, Schedule, StageStatus};
use vortexlab::pde::InitialGuess;
use vortexlab::pipeline::{self, exit, Run};

#[derive(Parser)]
#[command(name = "vortexlab", version, about = "Sign-changing two-bubble solutions of -Δu = ρ²(e^u - τe^{-γu})")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Robin function, its maximizer and (on disks) closed-form fidelity.
    Green(Common),
    /// Multistart search for critical points of the Hamiltonian.
    Critical(Common),
    /// Builds the ansatz W at the last ρ and writes it.
    Ansatz(Common),
    /// Newton with continuation over the ρ schedule.
    Solve(Common),
    /// Follows a critical branch along the γ schedule.
    Sweep(Common),
    /// Runs the diagnostics on a stored field.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Field file to check.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Summarizes one or more run reports.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Seed {
    Ansatz,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum Projection {
    Exact,
    Expansion,
}

/// Config file plus flags that override its fields.
#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Grid size.
    #[arg(long)]
    n: Option<usize>,
    /// ρ or a comma-separated decreasing schedule.
    #[arg(long)]
    rho: Option<String>,
    /// γ or a comma-separated monotone schedule.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    /// Initial guess of the first Newton solve.
    #[arg(long)]
    seed: Option<Seed>,
    /// RNG seed of the multistart search.
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    projection: Option<Projection>,
    /// Output field (or CSV for `sweep`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report path (default: `<command>.json` in the output directory).
    #[arg(long)]
    report: Option<PathBuf>,
}

fn schedule(field: &str, text: &str) -> Result<Schedule, ConfigError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map(Schedule)
        .map_err(|e| ConfigError::Schema { path: field.into(), message: format!("{text:?}: {e}") })
}

fn load(common: &Common, command: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = load_config(&common.config)?;
    if let Some(n) = common.n {
        cfg.n = n;
    }
    if let Some(r) = &common.rho {
        cfg.rho = schedule("rho", r)?;
    }
    if let Some(g) = &common.gamma {
        cfg.gamma = schedule("gamma", g)?;
    }
    if let Some(t) = common.tau {
        cfg.tau = t;
    }
    if let Some(s) = common.rng_seed {
        cfg.seed = s;
    }
    if let Some(s) = common.seed {
        cfg.initial = match s {
            Seed::Ansatz => InitialGuess::Ansatz,
            Seed::Zero => InitialGuess::Zero,
        };
    }
    if let Some(p) = common.projection {
        cfg.projection = match p {
            Projection::Exact => ProjectionMode::Exact,
            Projection::Expansion => ProjectionMode::Expansion,
        };
    }
    if let Some(out) = &common.out {
        if command == "sweep" {
            cfg.output.csv = Some(out.clone());
        } else {
            cfg.output.field = Some(out.clone());
        }
    }
    if let Some(r) = &common.report {
        cfg.output.report = Some(r.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Prints a report summary; write errors (such as a closed pipe) are ignored.
fn print_summary(report: &Report) {
    let _ = write_summary(&mut std::io::stdout().lock(), report);
}

fn write_summary(out: &mut impl Write, report: &Report) -> std::io::Result<()> {
    writeln!(out, "{} {} (config {})", report.tool, report.command, &report.config_hash[..12])?;
    for s in &report.stages {
        match (&s.status, &s.error) {
            (StageStatus::Failed, Some(e)) => writeln!(out, "  stage {:<12} FAILED  {e}", s.name)?,
            _ => writeln!(out, "  stage {:<12} ok      {:.2} s", s.name, s.wall_clock_s)?,
        }
    }
    for v in &report.verdicts {
        let mark = if v.passed { "PASS" } else { "FAIL" };
        writeln!(out, "  {mark}  {}: {:.4e} (tolerance {:.1e})", v.name, v.value, v.tolerance)?;
    }
    for o in &report.outputs {
        writeln!(out, "  wrote {}", o.display())?;
    }
    Ok(())
}

fn run(command: &str, common: &Common, input: Option<PathBuf>) -> i32 {
    let cfg = match load(common, command) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err}");
            return exit::USAGE;
        }
    };
    let report = match Run::new(command, &cfg) {
        Ok(mut run) => {
            match command {
                "green" => pipeline::green_stage(&mut run),
                "critical" => {
                    pipeline::critical_stage(&mut run);
                }
                "ansatz" => pipeline::ansatz_stage(&mut run),
                "solve" => pipeline::solve_stage(&mut run),
                "sweep" => pipeline::sweep_stage(&mut run),
                "verify" => pipeline::verify_stage(&mut run, input.expect("verify has an input")),
                _ => unreachable!("unknown command {command}"),
            }
            run.finish()
        }
        Err(report) => *report,
    };
    let path = cfg.output_path(&cfg.output.report, &format!("{command}.json"));
    print_summary(&report);
    if let Err(err) = report.write(&path) {
        eprintln!("error: cannot write report {}: {err}", path.display());
        return exit::NUMERICAL.max(pipeline::exit_code(&report));
    }
    let _ = writeln!(std::io::stdout(), "  report {}", path.display());
    pipeline::exit_code(&report)
}

fn summarize(inputs: &[PathBuf]) -> i32 {
    let mut code = exit::PASS;
    for path in inputs {
        let report: Report = match std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        {
            Ok(r) => r,
            Err(err) => {
                eprintln!("error: {}: {err}", path.display());
                return exit::USAGE;
            }
        };
        let _ = writeln!(std::io::stdout(), "{}", path.display());
        print_summary(&report);
        code = code.max(pipeline::exit_code(&report));
    }
    code
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            let code = if err.use_stderr() { exit::USAGE } else { exit::PASS };
            return ExitCode::from(code as u8);
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(exit::USAGE as u8);
        }
        if let Err(err) = vortexlab::par::set_threads(j) {
            eprintln!("warning: {err}");
        }
    }
    let code = match &cli.command {
        Command::Green(c) => run("green", c, None),
        Command::Critical(c) => run("critical", c, None),
        Command::Ansatz(c) => run("ansatz", c, None),
        Command::Solve(c) => run("solve", c, None),
        Command::Sweep(c) => run("sweep", c, None),
        Command::Verify { common, input } => run("verify", common, Some(input.clone())),
        Command::Report { inputs } => summarize(inputs),
    };
    ExitCode::from(code as u8)
}
