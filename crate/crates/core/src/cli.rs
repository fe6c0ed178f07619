//! Command-line front end. Exit codes: 0 success or converged, 2 a flow that
//! ran out of budget, 1 any error.

use crate::config::RunConfig;
use crate::diagnostics::{fit_decay, DecayOutcome, DiagnosticsRecord, DiagnosticsWriter};
use crate::error::{Error, Result};
use crate::field_io::{read_header, write_field};
use crate::flow::{run_flow_with, trajectory, FlowRun, FlowState, RunStatus, Scheme};
use crate::identities::{check_trajectory, precursor_consistency, worst_by_name, write_identity_reports, TimeDifference};
use crate::oracle::{residual, solve_n1, solve_newton, StationaryProblem};
use crate::speed::SpeedFunction;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Tolerance of the stationary solvers behind `oracle`.
const ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "cmaflow", version, about = "Parabolic complex Monge-Ampere flows on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the flow and record per-step diagnostics.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve the stationary equation directly.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the same data under several speeds and compare the limits.
    Compare {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "log,linear,power:2,inverse_ma")]
        speeds: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate the evolution identities on a short RK4 trajectory.
    Check {
        config: PathBuf,
        /// Use forward instead of centered time differences.
        #[arg(long)]
        forward: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the header of a CMAF1 field file.
    DumpInfo { file: PathBuf },
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_ERROR;
    }
    let mut out = std::io::stdout().lock();
    match dispatch(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Honors `CMAFLOW_THREADS` by sizing the global pool once.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CMAFLOW_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config { key: "CMAFLOW_THREADS".into(), msg: format!("expected a positive integer, got `{raw}`") })?;
    // a pool that is already built keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Run { config, output } => cmd_run(&config, output, out),
        Command::Oracle { config, output } => cmd_oracle(&config, output, out),
        Command::Compare { config, speeds, output } => cmd_compare(&config, &speeds, output, out),
        Command::Check { config, forward, output } => cmd_check(&config, forward, output, out),
        Command::DumpInfo { file } => {
            let h = read_header(&file)?;
            writeln!(out, "n={} N={} count={}", h.dim, h.size, h.count)?;
            Ok(EXIT_OK)
        }
    }
}

fn output_dir(cfg: &RunConfig, output: Option<PathBuf>) -> Result<PathBuf> {
    let dir = output.unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_final_fields(dir: &Path, state: &FlowState, c0: f64) -> Result<()> {
    let endo = state.endo();
    write_field(&dir.join("u_final.cmaf"), state.u())?;
    write_field(&dir.join("phi_final.cmaf"), &state.phi())?;
    write_field(&dir.join("det_h.cmaf"), &endo.det_field())?;
    write_field(&dir.join("trace_h.cmaf"), &endo.trace_field())?;
    write_field(&dir.join("lambda_min.cmaf"), &endo.lambda_min_field())?;
    write_field(&dir.join("lambda_max.cmaf"), &endo.lambda_max_field())?;
    write_field(&dir.join("residual.cmaf"), &state.density().map(|h| h - c0)?)?;
    Ok(())
}

fn describe_decay(records: &[DiagnosticsRecord]) -> String {
    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.osc_udot)).collect();
    match fit_decay(&series) {
        DecayOutcome::Fitted(fit) => format!("eta={:.6} C={:.4e} R2={:.6}", fit.eta, fit.c, fit.r_squared),
        DecayOutcome::Skipped(note) => format!("decay fit skipped: {note}"),
    }
}

/// One flow with diagnostics streamed to `dir/diagnostics.csv`.
fn flow_into(cfg: &RunConfig, speed: SpeedFunction, dir: &Path) -> Result<(FlowRun, f64)> {
    let problem = cfg.problem_with(speed)?;
    let u0 = cfg.u0_field(problem.f.grid())?;
    let mut writer = DiagnosticsWriter::create(&dir.join("diagnostics.csv"))?;
    let mut accepted = 0usize;
    let dump_every = cfg.dump_every;
    let run = run_flow_with(&problem, &u0, &cfg.policy, &cfg.monitor()?, |state, record| {
        writer.append(record)?;
        if dump_every > 0 && accepted % dump_every == 0 {
            write_field(&dir.join(format!("u_{accepted:06}.cmaf")), state.u())?;
        }
        accepted += 1;
        Ok(())
    })?;
    write_final_fields(dir, &run.state, problem.c0)?;
    Ok((run, problem.c0))
}

fn cmd_run(config: &Path, output: Option<PathBuf>, out: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let dir = output_dir(&cfg, output)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let (run, c0) = flow_into(&cfg, cfg.speed()?, &dir)?;
    writeln!(out, "status: {}", run.status)?;
    writeln!(out, "steps: {} retries: {} t: {:.6}", run.steps, run.retries, run.state.t())?;
    writeln!(out, "c0: {c0:.12}")?;
    writeln!(out, "residual_sup: {:.3e}", run.state.residual_sup(c0))?;
    writeln!(out, "phi_sup: {:.6e}", run.phi().sup_norm())?;
    writeln!(out, "{}", describe_decay(&run.records))?;
    if cfg.checks {
        identity_suite(&cfg, false, &dir, out)?;
    }
    writeln!(out, "output: {}", dir.display())?;
    Ok(match run.status {
        RunStatus::Converged => EXIT_OK,
        RunStatus::NotConverged => EXIT_NOT_CONVERGED,
    })
}

fn cmd_oracle(config: &Path, output: Option<PathBuf>, out: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let dir = output_dir(&cfg, output)?;
    let grid = cfg.grid()?;
    let problem = StationaryProblem::new(cfg.metric()?, cfg.f_field(&grid)?, ORACLE_TOL)?;
    let phi = if cfg.n == 1 {
        writeln!(out, "method: poisson")?;
        solve_n1(&problem)?
    } else {
        let report = solve_newton(&problem, None)?;
        writeln!(out, "method: newton iterations={} linear iterations={}", report.iterations, report.linear_iterations)?;
        for (i, r) in report.residual_history.iter().enumerate() {
            writeln!(out, "  iteration {i}: |log residual| = {r:.3e}")?;
        }
        report.phi
    };
    let (field, sup) = residual(&problem.chi, &problem.f, &phi, problem.c0)?;
    write_field(&dir.join("phi_oracle.cmaf"), &phi)?;
    write_field(&dir.join("residual_oracle.cmaf"), &field)?;
    writeln!(out, "c0: {:.12}", problem.c0)?;
    writeln!(out, "residual_sup: {sup:.3e}")?;
    writeln!(out, "phi_sup: {:.6e}", phi.sup_norm())?;
    writeln!(out, "output: {}", dir.display())?;
    Ok(EXIT_OK)
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn cmd_compare(config: &Path, speeds: &[String], output: Option<PathBuf>, out: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let dir = output_dir(&cfg, output)?;
    let parsed: Vec<SpeedFunction> = speeds
        .iter()
        .map(|s| s.parse::<SpeedFunction>().map_err(|e| Error::Config { key: "--speeds".into(), msg: e.to_string() }))
        .collect::<Result<_>>()?;
    if parsed.is_empty() {
        return Err(Error::Config { key: "--speeds".into(), msg: "no speeds given".into() });
    }
    let runs: Vec<Result<FlowRun>> = parsed
        .par_iter()
        .map(|speed| {
            let sub = dir.join(sanitize(&speed.to_string()));
            fs::create_dir_all(&sub)?;
            flow_into(&cfg, speed.clone(), &sub).map(|(run, _)| run)
        })
        .collect();
    let runs: Vec<FlowRun> = runs.into_iter().collect::<Result<_>>()?;

    let mut all_converged = true;
    for (speed, run) in parsed.iter().zip(&runs) {
        all_converged &= run.status == RunStatus::Converged;
        writeln!(out, "{speed}: {} steps={} {}", run.status, run.steps, describe_decay(&run.records))?;
    }
    let phis: Vec<_> = runs.iter().map(FlowRun::phi).collect();
    let mut worst = 0.0f64;
    for i in 0..phis.len() {
        for j in i + 1..phis.len() {
            let d = phis[i].sup_distance(&phis[j])?;
            worst = worst.max(d);
            writeln!(out, "|phi[{}] - phi[{}]| = {d:.3e}", parsed[i], parsed[j])?;
        }
    }
    writeln!(out, "max pairwise phi difference: {worst:.3e}")?;
    writeln!(out, "output: {}", dir.display())?;
    Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn identity_suite(cfg: &RunConfig, forward: bool, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let problem = cfg.problem()?;
    let u0 = cfg.u0_field(problem.f.grid())?;
    let states = trajectory(&problem, &u0, cfg.check_dt, cfg.check_steps, Scheme::Rk4)?;
    let diff = if forward { TimeDifference::Forward } else { TimeDifference::Centered };
    let reports = check_trajectory(&problem, &states, diff)?;
    write_identity_reports(&dir.join("identities.csv"), &reports)?;
    writeln!(out, "identity suite: {} steps of dt={:e}, {diff:?} differences", cfg.check_steps, cfg.check_dt)?;
    for (name, worst) in worst_by_name(&reports) {
        writeln!(out, "  {name}: {worst:.3e}")?;
    }
    let gap = states
        .par_iter()
        .map(|s| precursor_consistency(&problem, s))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    writeln!(out, "  precursor_consistency: {gap:.3e}")?;
    Ok(())
}

fn cmd_check(config: &Path, forward: bool, output: Option<PathBuf>, out: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let dir = output_dir(&cfg, output)?;
    identity_suite(&cfg, forward, &dir, out)?;
    writeln!(out, "output: {}", dir.display())?;
    Ok(EXIT_OK)
}
