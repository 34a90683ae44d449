//! Command-line front end. [`run`] is the whole program; the binary only
//! forwards `argv` and the process streams.
//!
//! Exit codes: 0 success, 1 input error, 2 infeasible privacy analysis,
//! 3 training abort.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::accountant::{audit_summary, audit_summary_without_budget, to_budget, AccountantConfig, AccountingMode};
use crate::bottleneck::{run_experiment, twin_experiment, write_metrics, TrainConfig, TrainError};
use crate::clipping::{clip_dataset, feasibility_certificate, ClipConfig};
use crate::divergence::{pairwise_report, PairMode, RenyiReport};
use crate::order::RenyiOrder;
use crate::posterior::PosteriorDataset;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_TRAINING_ABORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nvdp-clip", version, about = "Rényi divergence audits and clipping for Dirichlet-process posteriors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pairwise report plus privacy budget for a posterior dataset.
    Analyze {
        dataset: PathBuf,
        #[command(flatten)]
        acct: AcctArgs,
        #[arg(long, default_value = "vs_all_pairs")]
        pairs: PairMode,
        /// Output directory for report.csv and budget.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Clip every posterior of a dataset to a clipping budget.
    Clip {
        dataset: PathBuf,
        #[arg(long = "clip-config")]
        clip_config: PathBuf,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise divergence report only.
    Pairwise {
        dataset: PathBuf,
        #[arg(long)]
        lambda: Option<RenyiOrder>,
        #[arg(long, default_value = "vs_all_pairs")]
        pairs: PairMode,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Privacy budget from an existing report CSV.
    Budget {
        report: PathBuf,
        #[command(flatten)]
        acct: AcctArgs,
        /// Budget JSON file (text summary on stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the toy model and audit its held-out posteriors.
    TrainToy {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Replaces the config's clipping budget.
        #[arg(long = "clip-config")]
        clip_config: Option<PathBuf>,
        #[command(flatten)]
        acct: AcctArgs,
        /// Output directory for model.json, metrics.csv, report.csv, budget.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Clipped vs unclipped twin runs with a comparison table.
    Demo {
        /// Training config (the shipped toy config if omitted).
        config: Option<PathBuf>,
        /// Repeat to run several seeds.
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long = "clip-config")]
        clip_config: Option<PathBuf>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct AcctArgs {
    /// Overrides the dataset's order where one is stored.
    #[arg(long)]
    lambda: Option<RenyiOrder>,
    #[arg(long, default_value_t = crate::accountant::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value = "worst_case")]
    mode: AccountingMode,
}

impl AcctArgs {
    fn config(&self, fallback: RenyiOrder) -> Result<AccountantConfig, CliError> {
        AccountantConfig::new(self.lambda.unwrap_or(fallback), self.delta, self.mode).map_err(|e| CliError::Input(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    TrainingAbort(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => EXIT_INPUT,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::TrainingAbort(_) => EXIT_TRAINING_ABORT,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

fn input<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(contents.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

fn emit(out: Option<&Path>, contents: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, contents),
        None => stdout.write_all(contents.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn load_dataset(path: &Path) -> Result<PosteriorDataset, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    PosteriorDataset::load(BufReader::new(file)).map_err(input(path))
}

fn load_clip_config(path: &Path) -> Result<ClipConfig, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(input(path))
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig, CliError> {
    match path {
        Some(p) => TrainConfig::from_json(&read_text(p)?).map_err(input(p)),
        None => Ok(TrainConfig::shipped_default()),
    }
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn infeasible_message(report: &RenyiReport) -> String {
    let mut msg = format!("{} infeasible pair(s); budget omitted", report.n_infeasible);
    for p in report.pairs.iter().filter(|p| !p.feasible).take(10) {
        let reason = p.reason.as_ref().map_or_else(String::new, |r| format!(": {r}"));
        msg.push_str(&format!("\n  ({}, {}){reason}", p.id_q, p.id_qp));
    }
    if report.n_infeasible > 10 {
        msg.push_str("\n  ...");
    }
    msg
}

/// Budget file and text summary for a report. When the budget is undefined
/// only the summary is printed and the infeasibility error is returned.
fn write_budget(
    report: &RenyiReport,
    acct: &AccountantConfig,
    json_out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let summary = match to_budget(report, acct) {
        Ok(b) => audit_summary(report, &b),
        Err(_) if report.n_infeasible > 0 => audit_summary_without_budget(report, acct),
        Err(e) => return Err(CliError::Input(e.to_string())),
    };
    if let (Some(p), Some(_)) = (json_out, summary.epsilon) {
        write_file(p, &summary.to_json())?;
    }
    stdout.write_all(summary.to_text().as_bytes()).map_err(io_err(Path::new("<stdout>")))?;
    if report.n_infeasible > 0 {
        return Err(CliError::Infeasible(infeasible_message(report)));
    }
    Ok(())
}

fn report_for(ds: &mut PosteriorDataset, lambda: Option<RenyiOrder>, pairs: PairMode) -> Result<RenyiReport, CliError> {
    if let Some(l) = lambda {
        ds.lambda = l;
    }
    pairwise_report(ds, pairs).map_err(|e| CliError::Input(e.to_string()))
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { dataset, acct, pairs, out } => {
            let mut ds = load_dataset(&dataset)?;
            let report = report_for(&mut ds, acct.lambda, pairs)?;
            let acct = acct.config(ds.lambda)?;
            out_dir(&out)?;
            write_file(&out.join("report.csv"), &report.to_csv_string())?;
            write_budget(&report, &acct, Some(&out.join("budget.json")), stdout)
        }
        Command::Clip { dataset, clip_config, out } => {
            let ds = load_dataset(&dataset)?;
            let cfg = load_clip_config(&clip_config)?;
            let clipped = clip_dataset(&ds, &cfg).map_err(input(&dataset))?;
            let cert = feasibility_certificate(&clipped, &cfg);
            if !cert.holds {
                let first = cert.violations.first().map(ToString::to_string).unwrap_or_default();
                return Err(CliError::Infeasible(format!("clipped dataset still fails the certificate: {first}")));
            }
            emit(out.as_deref(), &clipped.to_json_string(), stdout)
        }
        Command::Pairwise { dataset, lambda, pairs, out } => {
            let mut ds = load_dataset(&dataset)?;
            let report = report_for(&mut ds, lambda, pairs)?;
            emit(out.as_deref(), &report.to_csv_string(), stdout)?;
            if report.n_infeasible > 0 {
                return Err(CliError::Infeasible(infeasible_message(&report)));
            }
            Ok(())
        }
        Command::Budget { report, acct, out } => {
            let file = File::open(&report).map_err(io_err(&report))?;
            let parsed = RenyiReport::read_csv(BufReader::new(file)).map_err(input(&report))?;
            let acct = acct.config(RenyiOrder::DEFAULT)?;
            write_budget(&parsed, &acct, out.as_deref(), stdout)
        }
        Command::TrainToy { config, seed, clip_config, acct, out } => {
            let mut cfg = load_train_config(Some(&config))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = clip_config {
                cfg.clip = Some(load_clip_config(&p)?);
            }
            if let Some(l) = acct.lambda {
                cfg.lambda = l;
            }
            let acct = acct.config(cfg.lambda)?;
            train_toy(&cfg, &acct, &out, stdout)
        }
        Command::Demo { config, seed, clip_config, out } => {
            let mut cfg = load_train_config(config.as_deref())?;
            if let Some(p) = clip_config {
                cfg.clip = Some(load_clip_config(&p)?);
            }
            if cfg.clip.is_none() {
                return Err(CliError::Input("demo needs a clipping budget (config `clip` or --clip-config)".into()));
            }
            let seeds = if seed.is_empty() { vec![cfg.seed] } else { seed };
            let mut table = String::new();
            for s in seeds {
                let twin = twin_experiment(&TrainConfig { seed: s, ..cfg.clone() }).map_err(|e| CliError::Input(e.to_string()))?;
                table.push_str(&twin.to_string());
                table.push('\n');
            }
            stdout.write_all(table.as_bytes()).map_err(io_err(Path::new("<stdout>")))?;
            if let Some(p) = out {
                write_file(&p, &table)?;
            }
            Ok(())
        }
    }
}

fn train_toy(cfg: &TrainConfig, acct: &AccountantConfig, out: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let run = run_experiment(cfg).map_err(|e| match e {
        TrainError::NonFinite { .. } => CliError::TrainingAbort(e.to_string()),
        other => CliError::Input(other.to_string()),
    })?;
    if let Some(reason) = run.abort {
        return Err(CliError::TrainingAbort(reason));
    }
    let trained = run.trained.expect("completed run keeps its model");
    out_dir(out)?;
    write_file(&out.join("model.json"), &trained.model.to_json_string())?;
    let mut metrics = Vec::new();
    write_metrics(&trained.trace, &mut metrics).expect("writing to memory");
    write_file(&out.join("metrics.csv"), &String::from_utf8(metrics).expect("ascii"))?;

    let report = run.report.expect("completed run is audited");
    write_file(&out.join("report.csv"), &report.to_csv_string())?;
    writeln!(stdout, "test accuracy {:.4}", run.test_accuracy).map_err(io_err(Path::new("<stdout>")))?;
    write_budget(&report, acct, Some(&out.join("budget.json")), stdout)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
