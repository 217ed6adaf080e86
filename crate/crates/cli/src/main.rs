use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use oblique_cli::config::{load_scenario, ConfigError, Scenario};
use oblique_cli::suite::{builtin, run_suite};
use oblique_cli::report::{fmt_float, to_json, write_residual_csv, write_trajectory_csv};
use oblique_cli::runner::{csv_rows, residual_series, run, sweep, Stage};
use oblique_core::asymptote::ClassKind;
use oblique_core::hypotheses::Status;

#[derive(Parser)]
#[command(name = "oblique", version, about = "Asymptotic analysis of x'' + f(t, x/t) = 0")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the hypotheses requested by the scenario.
    Check(RunArgs),
    /// Integrate and run the requested Lyapunov monitors.
    Integrate(RunArgs),
    /// Full run: checks, integration, monitors, asymptote and classification.
    Classify {
        #[command(flatten)]
        args: RunArgs,
        /// Write the (t, x - x1 t - x2) residual series as CSV.
        #[arg(long, value_name = "PATH")]
        emit_plot_data: Option<PathBuf>,
    },
    /// Classify every point of the scenario's [sweep] grid.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the built-in reference scenarios and check their expected outcomes.
    VerifyPaper {
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Leave the wall-clock timings out of the report.
        #[arg(long)]
        omit_timings: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or `builtin:NAME` for a built-in scenario.
    #[arg(long, value_name = "PATH")]
    config: String,
    #[arg(long, value_name = "T")]
    horizon: Option<f64>,
    #[arg(long, value_name = "R")]
    rel_tol: Option<f64>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Leave the wall-clock timings out of the report.
    #[arg(long)]
    omit_timings: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

enum Failure {
    Usage(String),
    Other(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn scenario(args: &RunArgs) -> Result<Scenario, Failure> {
    let base = match args.config.strip_prefix("builtin:") {
        Some(name) => builtin(name).ok_or_else(|| Failure::Usage(format!("no built-in scenario named {name}")))?,
        None => load_scenario(Path::new(&args.config))?,
    };
    Ok(base.with_overrides(args.horizon, args.rel_tol)?)
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    let mut w = output(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn run_scenario(args: &RunArgs, stage: Stage, plot: Option<&Path>) -> Result<bool, Failure> {
    let s = scenario(args)?;
    if stage == Stage::Check && args.format == Format::Csv {
        return Err(Failure::Usage("check writes JSON only".into()));
    }
    let out = run(&s, stage)?;
    for e in &out.report.errors {
        eprintln!("warning: {e}");
    }
    match args.format {
        Format::Json => {
            let timings = (!args.omit_timings).then_some(&out.timings);
            write_text(args.out.as_deref(), &to_json(&out.report, timings).context("serializing report")?)?;
        }
        Format::Csv => {
            let mut w = output(args.out.as_deref())?;
            write_trajectory_csv(&mut w, &csv_rows(&s, &out)).context("writing CSV")?;
        }
    }
    if let Some(path) = plot {
        let series = residual_series(&out)
            .ok_or_else(|| Failure::Other(anyhow::anyhow!("no asymptote estimate to plot against")))?;
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        write_residual_csv(BufWriter::new(file), &series).context("writing plot data")?;
    }
    let failed = out.report.hypotheses.iter().any(|c| c.any_fails());
    Ok(stage != Stage::Check || !failed)
}

fn run_sweep(args: &RunArgs, workers: usize) -> Result<bool, Failure> {
    let s = scenario(args)?;
    let points = sweep(&s, workers)?;
    match args.format {
        Format::Json => write_text(args.out.as_deref(), &to_json(&points, None).context("serializing sweep")?)?,
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(output(args.out.as_deref())?);
            w.write_record(["x0", "xp0", "kind", "x1", "x2", "t_inf", "threshold", "threshold_margin", "error"])
                .context("writing CSV")?;
            for p in &points {
                let (x1, x2, t_inf) = match p.classification {
                    Some(ClassKind::AsymptoticallyLinear { x1, x2 }) => (fmt_float(x1), fmt_float(x2), String::new()),
                    Some(ClassKind::Blowup { t_inf_estimate }) => (String::new(), String::new(), fmt_float(t_inf_estimate)),
                    _ => Default::default(),
                };
                let threshold = match p.threshold {
                    Some(Status::Holds) => "holds",
                    Some(Status::Fails) => "fails",
                    Some(Status::Inconclusive) => "inconclusive",
                    None => "",
                };
                w.write_record([
                    fmt_float(p.x0),
                    fmt_float(p.xp0),
                    p.classification.map(|k| k.name()).unwrap_or_default().to_string(),
                    x1,
                    x2,
                    t_inf,
                    threshold.to_string(),
                    p.threshold_margin.map(fmt_float).unwrap_or_default(),
                    p.error.clone().unwrap_or_default(),
                ])
                .context("writing CSV")?;
            }
            w.flush().context("writing CSV")?;
        }
    }
    Ok(true)
}

fn run_verify(out: Option<&Path>, omit_timings: bool) -> Result<bool, Failure> {
    let (suite, timings) = run_suite();
    for a in suite.assertions() {
        let tag = if a.passed { "PASS" } else { "FAIL" };
        eprintln!("[{tag}] criterion {}: {} ({})", a.criterion, a.name, a.detail);
    }
    let timings = (!omit_timings).then_some(&timings);
    write_text(out, &to_json(&suite, timings).context("serializing suite report")?)?;
    Ok(suite.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(args) => run_scenario(args, Stage::Check, None),
        Command::Integrate(args) => run_scenario(args, Stage::Integrate, None),
        Command::Classify { args, emit_plot_data } => run_scenario(args, Stage::Classify, emit_plot_data.as_deref()),
        Command::Sweep { args, workers } => run_sweep(args, *workers),
        Command::VerifyPaper { out, omit_timings } => run_verify(out.as_deref(), *omit_timings),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
