//! Command-line front end. Exit codes: 0 success (and `--help`), 1 usage or
//! input error, 2 runtime or numerical failure.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::experiment::{
    format_aggregate_table, plot_table, read_runs_csv, run_experiment, write_outputs, ExperimentConfig,
};
use crate::models::{lookup, BUILTIN_IDS};
use crate::quantum::random_density_matrix;
use crate::shadows::PauliShadowScheme;
use crate::theory::{discrepancies, numerical_hessians, reference, Discrepancy, FisherReport, ReferenceConstants};

/// Largest entrywise error accepted by `check-shadows`.
pub const SHADOW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "qsing", version, about = "Bayesian quantum state estimation with classical shadows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment from a config file and write its outputs.
    Run(RunArgs),
    /// Print finite-difference Fisher quantities and reference constants as JSON.
    Theory(TheoryArgs),
    /// List the built-in models.
    Models,
    /// Check exact unbiasedness of the Pauli shadow snapshots on random states.
    CheckShadows(CheckShadowsArgs),
    /// Summarize one metric of a runs.csv as an (n, mean, stderr) table.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML (or JSON) experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads [env: QSING_THREADS; default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub model: String,
    /// Variant for `ex43_depol` (quadratic | cusp).
    #[arg(long)]
    pub variant: Option<String>,
    /// Comma-separated evaluation point; defaults to the model's optimum.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// Finite-difference step relative to the domain width.
    #[arg(long)]
    pub fd_step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckShadowsArgs {
    /// Number of random states.
    #[arg(long, default_value_t = 20)]
    pub states: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub qubits: usize,
    /// Corrupts one snapshot before checking (negative control).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    /// runs.csv produced by `run`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Column or derived metric (qwaic_gap, waic_gap, n_c_n_q).
    #[arg(long)]
    pub metric: String,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reference column, e.g. `--overlay c_over_n 8.08` adds 8.08/n.
    #[arg(long, num_args = 2, value_names = ["KIND", "VALUE"])]
    pub overlay: Option<Vec<String>>,
}

#[derive(Serialize)]
struct TheoryOutput {
    report: FisherReport,
    reference: ReferenceConstants,
    discrepancies: Vec<Discrepancy>,
}

struct Failure {
    code: i32,
    message: String,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

/// Input problems are usage errors; everything else is a runtime failure.
fn classify(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::UnknownModel(_) | Error::Data { .. } | Error::Io { .. } => usage(e),
        _ => runtime(e),
    }
}

/// Parses `args` (program name first) and runs the command, writing to the
/// given streams. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Theory(a) => cmd_theory(a, out),
        Command::Models => cmd_models(out),
        Command::CheckShadows(a) => cmd_check_shadows(a, out),
        Command::PlotData(a) => cmd_plot_data(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut config = ExperimentConfig::from_path(&a.config).map_err(usage)?;
    if let Some(dir) = a.out {
        config.output_dir = dir;
    }
    let config = config.resolved().map_err(usage)?;
    let threads = match a.threads {
        Some(t) => Some(t),
        None => match std::env::var("QSING_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| usage(format!("QSING_THREADS must be a positive integer, got `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    if threads == Some(0) {
        return Err(usage("thread count must be positive"));
    }
    let (records, aggregates) = run_experiment(&config, threads).map_err(runtime)?;
    write_outputs(&config, &records, &aggregates, &config.output_dir).map_err(runtime)?;
    write!(out, "{}", format_aggregate_table(&aggregates)).map_err(runtime)?;
    writeln!(out, "wrote {}", config.output_dir.display()).map_err(runtime)
}

fn cmd_theory(a: TheoryArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let model = lookup(&a.model, a.variant.as_deref()).map_err(usage)?;
    let theta = match a.theta {
        Some(t) => t,
        None => model
            .optimal_theta()
            .ok_or_else(|| usage(format!("model `{}` has no default point; pass --theta", model.id())))?
            .to_vec(),
    };
    if theta.len() != model.param_dim() {
        return Err(usage(format!(
            "--theta has {} entries, model `{}` has {} parameters",
            theta.len(),
            model.id(),
            model.param_dim()
        )));
    }
    if !model.domain_contains(&theta).map_err(usage)? {
        return Err(usage(Error::OutOfDomain { theta }));
    }
    let rho_true = model.true_state().map_err(classify)?;
    let scheme = PauliShadowScheme::new(1).map_err(runtime)?;
    let report = numerical_hessians(&model, &rho_true, scheme.povm(), &theta, a.fd_step).map_err(runtime)?;
    let reference = reference(model.id()).map_err(usage)?;
    let output = TheoryOutput {
        discrepancies: discrepancies(&report, &reference),
        report,
        reference,
    };
    let json = serde_json::to_string_pretty(&output).map_err(runtime)?;
    writeln!(out, "{json}").map_err(runtime)
}

fn cmd_models(out: &mut dyn Write) -> Result<(), Failure> {
    for id in BUILTIN_IDS {
        let m = lookup(id, None).map_err(runtime)?;
        let bounds: Vec<String> = m
            .domain()
            .bounds()
            .iter()
            .map(|(lo, hi)| format!("[{lo:.6}, {hi:.6}]"))
            .collect();
        writeln!(
            out,
            "{id}\td={}\tdim={}\tdomain={}\t{}",
            m.param_dim(),
            m.hilbert_dim(),
            bounds.join(" x "),
            m.description()
        )
        .map_err(runtime)?;
    }
    Ok(())
}

fn cmd_check_shadows(a: CheckShadowsArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.states == 0 {
        return Err(usage("--states must be positive"));
    }
    let mut scheme = PauliShadowScheme::new(a.qubits).map_err(usage)?;
    if a.inject_fault {
        let bad = scheme.snapshot(0).map_err(runtime)?.mat.scale(1.0 + 1e-6);
        scheme.corrupt_snapshot(0, bad);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut worst = 0.0f64;
    for _ in 0..a.states {
        let rho = random_density_matrix(scheme.dim(), &mut rng);
        worst = worst.max(scheme.unbiasedness_error(&rho).map_err(runtime)?);
    }
    if worst <= SHADOW_TOLERANCE {
        writeln!(out, "{} states, max error {worst:.3e} < 1e-12", a.states).map_err(runtime)
    } else {
        Err(runtime(format!(
            "{} states, max error {worst:.3e} exceeds 1e-12",
            a.states
        )))
    }
}

fn cmd_plot_data(a: PlotDataArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let overlay = match a.overlay.as_deref() {
        None => None,
        Some([kind, value]) if kind == "c_over_n" => Some(
            value
                .parse::<f64>()
                .map_err(|_| usage(format!("overlay value `{value}` is not a number")))?,
        ),
        Some([kind, _]) => return Err(usage(format!("unknown overlay `{kind}`; expected c_over_n"))),
        Some(_) => return Err(usage("--overlay takes KIND VALUE")),
    };
    let records = read_runs_csv(&a.input).map_err(usage)?;
    let table = plot_table(&records, &a.metric, overlay).map_err(usage)?;
    match a.out {
        Some(path) => std::fs::write(&path, table).map_err(|e| runtime(Error::Io { path, source: e })),
        None => write!(out, "{table}").map_err(runtime),
    }
}

