//! Command-line front end.
//!
//! ```text
//! tracksyn check <file> [--kappa K]
//! tracksyn synthesize <file> [--kappa K]
//! tracksyn simulate <file> [--T H] [--dt DT] [--eps E --hold T0] [--stable-c C] [--kappa K] [--out DIR]
//! tracksyn example <name> [--out DIR]
//! ```
//!
//! Exit codes: 0 success, 2 parse/validation error, 3 assumption failure,
//! 4 solver failure. Simulation outputs land in `<out>/<run-id>/` as
//! `trace.csv`, `report.txt` and `assumptions.txt`, with the run id
//! hashed from the input file and the effective flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::assumptions::{check_assumptions, AssumptionReport, CheckError, Grid};
use crate::builtin;
use crate::classify::{classify, ClassifySettings, StabilityVerdict, DEFAULT_STABLE_FACTOR};
use crate::model::{ModelError, SystemModel};
use crate::report;
use crate::sim::{self, SimStatus, SimulationResult};
use crate::synthesis::{probe_delta, recover_linear_gain, FeedbackLaw, SynthesisError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<ModelError> for CliError {
    fn from(err: ModelError) -> CliError {
        CliError {
            exit_code: EXIT_PARSE,
            message: err.to_string(),
        }
    }
}

impl From<CheckError> for CliError {
    fn from(err: CheckError) -> CliError {
        CliError {
            exit_code: EXIT_ASSUMPTION,
            message: err.to_string(),
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(err: SynthesisError) -> CliError {
        let exit_code = match err {
            SynthesisError::EigenvalueInequality { .. } => EXIT_ASSUMPTION,
            SynthesisError::RankDeficient { .. }
            | SynthesisError::SingularB { .. }
            | SynthesisError::ContractionFailure { .. }
            | SynthesisError::GammaTooLarge { .. }
            | SynthesisError::Eval(_) => EXIT_SOLVER,
            _ => EXIT_PARSE,
        };
        CliError {
            exit_code,
            message: err.to_string(),
        }
    }
}

impl From<sim::SimError> for CliError {
    fn from(err: sim::SimError) -> CliError {
        CliError {
            exit_code: EXIT_SOLVER,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> CliError {
        CliError {
            exit_code: EXIT_PARSE,
            message: err.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tracksyn",
    about = "Feedback synthesis and closed-loop simulation for nonlinear trajectory tracking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the synthesis preconditions on a time grid and report the
    /// fitted constants.
    Check {
        file: PathBuf,
        /// Remainder probe ball radius.
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
    },
    /// Check, then synthesize the feedback law and summarize it.
    Synthesize {
        file: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
    },
    /// Synthesize, simulate the closed loop and classify the outcome.
    Simulate {
        file: PathBuf,
        /// Horizon override.
        #[arg(long = "T")]
        horizon: Option<f64>,
        /// Step override.
        #[arg(long)]
        dt: Option<f64>,
        /// Attenuation tolerance (requires --hold to be meaningful;
        /// defaults to half the horizon).
        #[arg(long)]
        eps: Option<f64>,
        /// Attenuation hold time.
        #[arg(long)]
        hold: Option<f64>,
        /// Lyapunov bound factor C in |e(t)| <= C |e(0)|.
        #[arg(long = "stable-c", default_value_t = DEFAULT_STABLE_FACTOR)]
        stable_c: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Output directory root.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a built-in example end to end (check, synthesize, simulate).
    Example {
        /// One of: lti, pendulum2, paper2d, chained3, driftless2.
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Check { file, kappa } => cmd_check(&file, kappa),
        Command::Synthesize { file, kappa } => cmd_synthesize(&file, kappa),
        Command::Simulate {
            file,
            horizon,
            dt,
            eps,
            hold,
            stable_c,
            kappa,
            out,
        } => {
            let text = std::fs::read_to_string(&file)?;
            let base = file.parent().unwrap_or(Path::new(".")).to_path_buf();
            cmd_simulate(
                &text,
                base,
                SimFlags {
                    horizon,
                    dt,
                    eps,
                    hold,
                    stable_c,
                    kappa,
                    out,
                },
            )
            .map(|_| ())
        }
        Command::Example { name, out } => cmd_example(&name, &out),
    }
}

fn load_and_check(
    text: &str,
    base: PathBuf,
    kappa: f64,
) -> Result<(SystemModel, AssumptionReport), CliError> {
    let model = SystemModel::from_str(text, base)?;
    let grid = Grid::default_for(&model);
    let report = check_assumptions(&model, &grid, kappa)?;
    Ok((model, report))
}

fn require_pass(report: &AssumptionReport) -> Result<(), CliError> {
    if report.all_pass() {
        Ok(())
    } else {
        Err(CliError {
            exit_code: EXIT_ASSUMPTION,
            message: format!(
                "assumption check failed on the grid:\n{}",
                report::render_check_lines(report)
            ),
        })
    }
}

pub fn cmd_check(file: &Path, kappa: f64) -> Result<(), CliError> {
    let text = std::fs::read_to_string(file)?;
    let base = file.parent().unwrap_or(Path::new(".")).to_path_buf();
    let (_, report) = load_and_check(&text, base, kappa)?;
    print!("{}", report.render());
    print!("{}", report::render_check_lines(&report));
    require_pass(&report)
}

pub fn cmd_synthesize(file: &Path, kappa: f64) -> Result<(), CliError> {
    let text = std::fs::read_to_string(file)?;
    let base = file.parent().unwrap_or(Path::new(".")).to_path_buf();
    let (model, report) = load_and_check(&text, base, kappa)?;
    require_pass(&report)?;
    let summary = synthesize_summary(&model, &report)?;
    print!("{summary}");
    Ok(())
}

fn synthesize_summary(model: &SystemModel, report: &AssumptionReport) -> Result<String, CliError> {
    let law = FeedbackLaw::synthesize(model, report)?;
    let e0_norm = law.initial_error().norm();
    let probe = probe_delta(model, &law, (2.0 * e0_norm).max(1.0));
    let gain = recover_linear_gain(model, &law)?;
    let linear_form = report::recover_associated_linear_form(model, &law)?;
    Ok(report::render_synthesis_summary(
        model,
        &law,
        Some(&probe),
        gain.as_ref(),
        linear_form.as_ref(),
    ))
}

pub struct SimFlags {
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub eps: Option<f64>,
    pub hold: Option<f64>,
    pub stable_c: f64,
    pub kappa: f64,
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub verdict: StabilityVerdict,
    pub result: SimulationResult,
}

/// Shared driver: check, synthesize, simulate, classify, write outputs.
pub fn cmd_simulate(text: &str, base: PathBuf, flags: SimFlags) -> Result<RunOutput, CliError> {
    let (model, report) = load_and_check(text, base, flags.kappa)?;
    require_pass(&report)?;
    let law = FeedbackLaw::synthesize(&model, &report)?;

    let sim_settings = model.simulate_settings();
    let horizon = flags.horizon.unwrap_or(sim_settings.horizon);
    let dt = flags.dt.unwrap_or(sim_settings.dt);
    let x0 = model.initial_state().map_err(ModelError::from)?;
    let result = sim::simulate(&model, &law, &x0, horizon, dt)?;

    let attenuation = flags
        .eps
        .map(|eps| (eps, flags.hold.unwrap_or(horizon / 2.0)));
    let verdict = classify(
        &result,
        &ClassifySettings {
            stable_factor: flags.stable_c,
            attenuation,
        },
    );

    let flag_string = format!(
        "T={horizon};dt={dt};eps={:?};hold={:?};C={};kappa={}",
        flags.eps, flags.hold, flags.stable_c, flags.kappa
    );
    let dir = flags
        .out
        .join(report::run_id(text.as_bytes(), &flag_string));
    std::fs::create_dir_all(&dir)?;

    std::fs::write(dir.join("assumptions.txt"), report.render())?;
    let mut trace = std::fs::File::create(dir.join("trace.csv"))?;
    report::write_trace_csv(&mut trace, &result)?;

    let gain = recover_linear_gain(&model, &law)?;
    let linear_form = report::recover_associated_linear_form(&model, &law)?;
    let e0_norm = law.initial_error().norm();
    let probe = probe_delta(&model, &law, (2.0 * e0_norm).max(1.0));
    let mut report_text = report::render_synthesis_summary(
        &model,
        &law,
        Some(&probe),
        gain.as_ref(),
        linear_form.as_ref(),
    );
    report_text.push('\n');
    report_text.push_str(&report::render_verdict(
        &result,
        &verdict,
        law.is_augmented(),
    ));
    std::fs::write(dir.join("report.txt"), &report_text)?;

    print!("{report_text}");
    println!("outputs: {}", dir.display());

    match &result.status {
        SimStatus::Completed => Ok(RunOutput {
            dir,
            verdict,
            result,
        }),
        SimStatus::SolverFailure { t, message } | SimStatus::DomainError { t, message } => {
            Err(CliError {
                exit_code: EXIT_SOLVER,
                message: format!("run truncated at t = {t}: {message}"),
            })
        }
    }
}

pub fn cmd_example(name: &str, out: &Path) -> Result<(), CliError> {
    let text = builtin::source(name).ok_or_else(|| CliError {
        exit_code: EXIT_PARSE,
        message: format!(
            "unknown example `{name}` (available: {})",
            builtin::NAMES.join(", ")
        ),
    })?;

    let dir = out.join(report::run_id(text.as_bytes(), &format!("example={name}")));
    std::fs::create_dir_all(&dir)?;
    let system_path = dir.join(format!("{name}.system"));
    std::fs::write(&system_path, text)?;
    println!("system file: {}", system_path.display());

    let flags = SimFlags {
        horizon: None,
        dt: None,
        eps: None,
        hold: None,
        stable_c: DEFAULT_STABLE_FACTOR,
        kappa: 1.0,
        out: dir.clone(),
    };
    let run = cmd_simulate(text, dir.clone(), flags)?;

    match name {
        "paper2d" => paper2d_extras(text, &run, &dir)?,
        "chained3" => chained3_extras(&run, &dir)?,
        _ => {}
    }
    Ok(())
}

/// Compares the integrated first gap component against its
/// variation-of-constants quadrature, and re-runs the example without the
/// disturbance to show the loss of convergence.
fn paper2d_extras(text: &str, run: &RunOutput, dir: &Path) -> Result<(), CliError> {
    let model = SystemModel::from_str(text, dir.to_path_buf())?;
    let report = check_assumptions(&model, &Grid::default_for(&model), 1.0)?;
    let law = FeedbackLaw::synthesize(&model, &report)?;
    let eigs = law.delta().eigenvalues();
    let e0 = law.initial_error();
    let quad = crate::reference::paper2d_gap1_quadrature(
        |t| model.disturbance(t).map(|w| w[0]).unwrap_or(f64::NAN),
        (eigs[0], eigs[1]),
        (e0[0], e0[1]),
        &run.result.times,
    );
    let worst = run
        .result
        .gap
        .as_ref()
        .map(|gap| {
            gap.iter()
                .zip(quad.iter())
                .map(|(g, q)| (g[0] - q).abs())
                .fold(0.0f64, f64::max)
        })
        .unwrap_or(f64::NAN);
    println!("gap quadrature comparison: max |E1_sim - E1_quadrature| = {worst:.3e}");

    // comparison run without the disturbance: convergence degrades to
    // boundedness, with a generic initial error so the limit is visible
    let w0_text = text
        .replace("w1 = -2", "w1 = 0")
        .replace("x0 = 1, 1", "x0 = 1, 0.5");
    let w0_model = SystemModel::from_str(&w0_text, dir.to_path_buf())?;
    let w0_report = check_assumptions(&w0_model, &Grid::default_for(&w0_model), 1.0)?;
    let w0_law = FeedbackLaw::synthesize(&w0_model, &w0_report)?;
    let x0 = w0_model.initial_state().map_err(ModelError::from)?;
    let settings = w0_model.simulate_settings();
    let w0_result = sim::simulate(&w0_model, &w0_law, &x0, settings.horizon, settings.dt)?;
    let w0_verdict = classify(&w0_result, &ClassifySettings::default());
    let mut trace = std::fs::File::create(dir.join("trace_w0.csv"))?;
    report::write_trace_csv(&mut trace, &w0_result)?;
    println!("comparison run with w = 0:");
    print!("{}", report::render_verdict(&w0_result, &w0_verdict, true));
    println!(
        "final e1 with w = 0: {:.6} (e1(0) - e2(0) = {:.6})",
        w0_result.errors.last().map(|e| e[0]).unwrap_or(f64::NAN),
        x0[0] - x0[1]
    );
    Ok(())
}

/// Runs the sinusoidal time-varying comparison law, which converges where
/// the static associated law stalls.
fn chained3_extras(run: &RunOutput, dir: &Path) -> Result<(), CliError> {
    let model = SystemModel::from_str(builtin::CHAINED3, dir.to_path_buf())?;
    let x0 = model.initial_state().map_err(ModelError::from)?;
    let dt = model.simulate_settings().dt;
    let result =
        sim::integrate_controller(&model, sim::sinusoid_reference_controller, &x0, 40.0, dt)?;
    let verdict = classify(&result, &ClassifySettings::default());
    let mut trace = std::fs::File::create(dir.join("trace_reference.csv"))?;
    report::write_trace_csv(&mut trace, &result)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "static associated law verdict: {}",
        run.verdict.class.label()
    );
    let _ = writeln!(
        text,
        "  stalls at x3 = {:.6}",
        run.result.states.last().map(|x| x[2]).unwrap_or(f64::NAN)
    );
    let _ = writeln!(
        text,
        "sinusoidal time-varying law verdict: {}",
        verdict.class.label()
    );
    let _ = writeln!(
        text,
        "  |x(40)| = {:.6e}",
        result.states.last().map(|x| x.norm()).unwrap_or(f64::NAN)
    );
    print!("{text}");
    std::fs::write(dir.join("report_reference.txt"), text)?;
    Ok(())
}
