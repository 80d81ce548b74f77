//! The `bf` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 parse or validation error,
//! 3 runtime or solver error, 4 certificate failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use bf_core::analysis::{
    descent_report, detect_periodic_orbit, linearize_equilibrium, DescentReport, LinearizationReport,
    PeriodicityReport, DEFAULT_PERIODIC_THRESHOLD,
};
use bf_core::config::{parse_config, preset_names, preset_text};
use bf_core::control::{ControllerConfig, Mode};
use bf_core::estimator::{estimate_leader, EstimateErrors, LeaderEstimate, MeasurementSeries};
use bf_core::io::{read_trajectory_csv, write_json, write_run, RunManifest, MANIFEST_FILE};
use bf_core::parallel::Executor;
use bf_core::scenarios::{pair_leader_bound, run_chain, run_two_agent, RunResult, ScenarioConfig};
use bf_core::sweep::{sweep, SweepReport};
use bf_core::FormationError;
use clap::{Parser, Subcommand};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_CERTIFICATE: i32 = 4;

pub const ANALYSIS_FILE: &str = "analysis.json";
pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Debug, Parser)]
#[command(name = "bf", version, about = "Leader-follower abreast formation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its trajectory and reports.
    Simulate {
        /// Config file, or a preset name (optionally with .cfg or .toml).
        config: String,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario as a chain, each agent following its predecessor.
    Chain {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certificates and estimates on a written trajectory.
    Analyze {
        trajectory: PathBuf,
        #[arg(long)]
        lyapunov: bool,
        /// Stroboscopic period to test.
        #[arg(long, value_name = "T")]
        periodic: Option<f64>,
        /// Start of the periodicity window; defaults to 0.75 of the horizon.
        #[arg(long)]
        settle: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_PERIODIC_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        linearize: bool,
        #[arg(long)]
        estimate: bool,
        /// Moving-average width for --estimate (odd, >= 3).
        #[arg(long, default_value_t = 3)]
        window: usize,
        /// Scenario the trajectory came from; defaults to the manifest next to it.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        config: String,
        /// Dotted key, e.g. `controller.mu1` or `leader.k_u`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the values one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// List the shipped presets, or print one.
    Presets { name: Option<String> },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<FormationError> for Failure {
    fn from(e: FormationError) -> Self {
        Self { code: exit_code(&e), message: e.to_string() }
    }
}

pub fn exit_code(e: &FormationError) -> i32 {
    use FormationError::*;
    match e {
        Parse(_)
        | Validation { .. }
        | InfeasibleInitialState(_)
        | ExcludedInitialCondition
        | NonpositiveDistance(_) => EXIT_INVALID,
        DescentViolation { .. } => EXIT_CERTIFICATE,
        _ => EXIT_RUNTIME,
    }
}

/// Root for default output directories: `BF_OUT_DIR`, else `./out`.
pub fn out_root() -> PathBuf {
    std::env::var_os("BF_OUT_DIR").map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

/// Reads a config argument: an existing file, else a preset name.
pub fn load_config_text(arg: &str) -> Result<String, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        return fs::read_to_string(path).map_err(|e| Failure::usage(format!("{arg}: {e}")));
    }
    preset_text(arg).map(str::to_string).ok_or_else(|| {
        let names: Vec<_> = preset_names().collect();
        Failure::usage(format!("{arg}: no such file or preset (presets: {})", names.join(", ")))
    })
}

fn load_config(arg: &str) -> Result<ScenarioConfig, Failure> {
    Ok(parse_config(&load_config_text(arg)?)?)
}

/// Parses `args` (program name first) and runs the command.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(cmd: Command) -> Result<i32, Failure> {
    match cmd {
        Command::Simulate { config, mode, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(m) = mode {
                cfg.controller.mode = m;
            }
            let result = if cfg.n_agents() == 2 { run_two_agent(&cfg, cfg.controller.mode)? } else { run_chain(&cfg)? };
            finish_run(&result, &cfg, out)
        }
        Command::Chain { config, out } => {
            let cfg = load_config(&config)?;
            let result = run_chain(&cfg)?;
            finish_run(&result, &cfg, out)
        }
        Command::Analyze {
            trajectory,
            lyapunov,
            periodic,
            settle,
            threshold,
            linearize,
            estimate,
            window,
            config,
            mode,
            out,
        } => analyze(AnalyzeArgs {
            trajectory,
            lyapunov,
            periodic,
            settle,
            threshold,
            linearize,
            estimate,
            window,
            config,
            mode,
            out,
        }),
        Command::Sweep { config, param, values, out, sequential } => {
            let text = load_config_text(&config)?;
            let name = parse_config(&text)?.name;
            let dir = out.unwrap_or_else(|| out_root().join(format!("{name}-sweep")));
            let exec = if sequential { Executor::Sequential } else { Executor::default() };
            let report: SweepReport = sweep(&text, &param, &values, exec, Some(&dir))?;
            write_json(&dir.join(SWEEP_FILE), &report)?;
            for r in &report.runs {
                match &r.error {
                    Some(e) => println!("{} = {}: error: {e}", param, r.value),
                    None => println!("{} = {}: certified = {}", param, r.value, r.certified()),
                }
            }
            println!("wrote {}", dir.display());
            Ok(if report.runs.iter().any(|r| r.error.is_some()) { EXIT_RUNTIME } else { EXIT_OK })
        }
        Command::Presets { name: None } => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(EXIT_OK)
        }
        Command::Presets { name: Some(name) } => match preset_text(&name) {
            Some(text) => {
                print!("{text}");
                Ok(EXIT_OK)
            }
            None => Err(Failure::usage(format!("unknown preset {name}"))),
        },
    }
}

fn finish_run(result: &RunResult, cfg: &ScenarioConfig, out: Option<PathBuf>) -> Result<i32, Failure> {
    let dir = out.unwrap_or_else(|| out_root().join(&cfg.name));
    let manifest: RunManifest = write_run(result, cfg, &dir)?;
    println!("wrote {} ({})", dir.display(), manifest.outputs.join(", "));
    let mut ok = true;
    for (p, d) in result.diagnostics.descent.iter().enumerate() {
        println!("pair {}-{}: descent {}", p + 1, p + 2, if d.passed { "ok" } else { "FAILED" });
        ok &= d.passed;
    }
    if let Some(p) = &result.diagnostics.periodicity {
        println!("period {}: residual {:e} ({})", p.period_t, p.residual, if p.converged { "ok" } else { "FAILED" });
        ok &= p.converged;
    }
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATE })
}

struct AnalyzeArgs {
    trajectory: PathBuf,
    lyapunov: bool,
    periodic: Option<f64>,
    settle: Option<f64>,
    threshold: f64,
    linearize: bool,
    estimate: bool,
    window: usize,
    config: Option<String>,
    mode: Option<Mode>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    pair: usize,
    #[serde(flatten)]
    estimate: LeaderEstimate,
    max_u1_residual: f64,
    /// Sup-norm errors against the leader columns of the trajectory.
    errors: EstimateErrors,
}

#[derive(Debug, Serialize)]
struct PairDescentAnalysis {
    leader: usize,
    follower: usize,
    #[serde(flatten)]
    report: DescentReport,
}

#[derive(Debug, Serialize)]
struct AnalysisReport {
    trajectory: String,
    lyapunov: Option<Vec<PairDescentAnalysis>>,
    periodicity: Option<PeriodicityReport>,
    linearization: Option<LinearizationReport>,
    estimate: Option<EstimateReport>,
}

/// Scenario behind a trajectory: `--config`, else `manifest.json` beside it.
fn analysis_config(a: &AnalyzeArgs) -> Result<Option<ScenarioConfig>, Failure> {
    if let Some(c) = &a.config {
        return load_config(c).map(Some);
    }
    let manifest = a.trajectory.parent().unwrap_or(Path::new(".")).join(MANIFEST_FILE);
    if !manifest.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&manifest).map_err(|e| Failure::usage(format!("{}: {e}", manifest.display())))?;
    let m: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Failure { code: EXIT_INVALID, message: format!("{}: {e}", manifest.display()) })?;
    let mut cfg = m.config_echo;
    cfg.controller.mode = m.mode;
    Ok(Some(cfg))
}

fn analyze(a: AnalyzeArgs) -> Result<i32, Failure> {
    if !(a.lyapunov || a.periodic.is_some() || a.linearize || a.estimate) {
        return Err(Failure::usage("nothing to do: pass --lyapunov, --periodic, --linearize or --estimate"));
    }
    if !a.trajectory.is_file() {
        return Err(Failure::usage(format!("{}: no such file", a.trajectory.display())));
    }
    let traj = read_trajectory_csv(&a.trajectory)?;
    if traj.n_pairs() == 0 {
        return Err(FormationError::Validation { path: "trajectory".into(), message: "no agent pairs".into() }.into());
    }
    let cfg = analysis_config(&a)?;
    let need_cfg = |what: &str| -> Result<&ScenarioConfig, Failure> {
        cfg.as_ref()
            .ok_or_else(|| Failure::usage(format!("{what} needs --config or a {MANIFEST_FILE} next to the trajectory")))
    };
    let mut report = AnalysisReport {
        trajectory: a.trajectory.display().to_string(),
        lyapunov: None,
        periodicity: None,
        linearization: None,
        estimate: None,
    };
    let mut certified = true;

    if a.lyapunov {
        let c = need_cfg("--lyapunov")?;
        let controller = ControllerConfig { mode: a.mode.unwrap_or(c.controller.mode), ..c.controller };
        let mut pairs = Vec::new();
        for p in 0..traj.n_pairs() {
            let r = descent_report(&traj.pair_series(p), &controller, pair_leader_bound(c, p));
            println!("pair {}-{}: descent {} ({} samples checked)", p + 1, p + 2, verdict(r.passed), r.checked);
            certified &= r.passed;
            pairs.push(PairDescentAnalysis { leader: p + 1, follower: p + 2, report: r });
        }
        report.lyapunov = Some(pairs);
    }

    if let Some(period) = a.periodic {
        let t = traj.times();
        let (t0, t1) = (t[0], t[t.len() - 1]);
        let dt = (t1 - t0) / (t.len() - 1).max(1) as f64;
        let settle = a.settle.unwrap_or_else(|| t0 + (0.75 * (t1 - t0) / dt).round() * dt);
        let r = detect_periodic_orbit(&traj.pair_series(0), period, settle, a.threshold)?;
        println!("period {period}: residual {:e} against {:e} ({})", r.residual, r.threshold, verdict(r.converged));
        certified &= r.converged;
        report.periodicity = Some(r);
    }

    if a.linearize {
        let c = need_cfg("--linearize")?;
        let v1 = c.leader.v1.eval(c.integrator.t_start);
        let r = linearize_equilibrium(v1, c.controller.mu1, &c.controller.potential)?;
        println!(
            "A = [[{}, {}], [{}, {}]], eigenvalues {}{:+}i, {}{:+}i, hurwitz {}",
            r.a[0][0],
            r.a[0][1],
            r.a[1][0],
            r.a[1][1],
            r.eigenvalues[0].re,
            r.eigenvalues[0].im,
            r.eigenvalues[1].re,
            r.eigenvalues[1].im,
            r.hurwitz
        );
        certified &= r.hurwitz;
        report.linearization = Some(r);
    }

    if a.estimate {
        let series = traj.pair_series(0);
        let est = estimate_leader(&MeasurementSeries::from_pair(&series), a.window)?;
        let errors = est.errors_against(&series);
        println!("estimate: errors v1 {:e}, alpha1 {:e}, u1 {:e}", errors.v1, errors.alpha1, errors.u1);
        report.estimate =
            Some(EstimateReport { pair: 1, max_u1_residual: est.max_u1_residual(), estimate: est, errors });
    }

    let dir = a.out.clone().unwrap_or_else(|| a.trajectory.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&dir).map_err(FormationError::from)?;
    write_json(&dir.join(ANALYSIS_FILE), &report)?;
    println!("wrote {}", dir.join(ANALYSIS_FILE).display());
    Ok(if certified { EXIT_OK } else { EXIT_CERTIFICATE })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}
