//! Command-line front end.
//!
//! Reports go to stdout (or `--out`); failures print a JSON error object on
//! stderr and map to exit status 1 (bad request or constraint violation),
//! 2 (unreadable or malformed input) or 3 (internal invariant).

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::cost::EquationMode;
use crate::model::{FcmKind, Precision};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "convfuse",
    version,
    about = "Plan DW/PW convolution fusion from analytic memory-traffic models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Choose which layers to fuse and how to tile them.
    Plan(PlanArgs),
    /// Evaluate one layer or pair at a given tiling.
    Estimate(TargetArgs),
    /// Find the minimum-traffic tiling of one layer or pair.
    Search(TargetArgs),
    /// Count loads, stores and MACs of a tiled execution.
    Simulate(TargetArgs),
    /// Compare analytic estimates with the simulator over the tiling grid.
    Verify(TargetArgs),
    /// Roofline class of one layer or pair, or of every entry of a plan.
    Classify(PlanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Paper,
    Consistent,
}

impl From<ModeArg> for EquationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Paper => EquationMode::PaperVerbatim,
            ModeArg::Consistent => EquationMode::Consistent,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model description (JSON).
    pub model: PathBuf,
    /// GPU preset name or path to a GPU JSON file.
    #[arg(long, default_value = "rtx_a4000")]
    pub gpu: String,
    #[arg(long, value_enum, default_value = "consistent")]
    pub mode: ModeArg,
    /// Override every layer's precision (fp32|int8).
    #[arg(long, value_parser = parse_precision)]
    pub precision: Option<Precision>,
    /// `full`, `even-only`, or a path to a grid JSON file.
    #[arg(long, default_value = "full")]
    pub grid: String,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add a generation timestamp to JSON reports.
    #[arg(long)]
    pub stamp: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    #[command(flatten)]
    pub common: Common,
    /// A single layer id.
    #[arg(long, conflicts_with = "pair")]
    pub layer: Option<String>,
    /// A producer,consumer pair of layer ids.
    #[arg(long)]
    pub pair: Option<String>,
    /// Fusion kind for --pair (dwpw|pwdw|pwdw_r|pwpw).
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<FcmKind>,
    /// Output tiling as HxWxD.
    #[arg(long)]
    pub tiling: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    /// Chain selector (dp|greedy).
    #[arg(long, default_value = "dp")]
    pub selection: String,
    /// Attach roofline classes to plan entries.
    #[arg(long)]
    pub annotate: bool,
    /// Print a human-readable rationale instead of JSON.
    #[arg(long)]
    pub explain: bool,
}

fn parse_precision(s: &str) -> std::result::Result<Precision, String> {
    s.parse()
}

fn parse_kind(s: &str) -> std::result::Result<FcmKind, String> {
    s.parse()
}

/// Parses `args` and runs the command, writing reports to `stdout` and error
/// objects to `stderr`. Returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let obj = json!({"error": {"kind": "usage", "message": e.to_string().trim_end()}});
            let _ = writeln!(stderr, "{obj}");
            return 1;
        }
    };
    match commands::execute(&cli.command) {
        Ok(out) => match emit(&out, stdout, stderr) {
            Ok(()) => 0,
            Err(e) => report_error(&e, stderr),
        },
        Err(e) => report_error(&e, stderr),
    }
}

/// A finished report plus where to put it.
pub(crate) struct Output {
    pub body: String,
    pub path: Option<PathBuf>,
    /// Structured warnings for reports whose format has no place for them.
    pub side_warnings: Vec<String>,
}

fn emit(out: &Output, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match &out.path {
        Some(p) => std::fs::write(p, &out.body)?,
        None => stdout.write_all(out.body.as_bytes())?,
    }
    if !out.side_warnings.is_empty() {
        writeln!(stderr, "{}", json!({ "warnings": out.side_warnings }))?;
    }
    Ok(())
}

fn report_error(e: &Error, stderr: &mut dyn Write) -> i32 {
    let mut obj = json!({"kind": e.kind(), "message": e.to_string()});
    if let Error::Constraint(report) = e {
        obj["violations"] =
            serde_json::to_value(report.violations().collect::<Vec<_>>()).unwrap_or_default();
    }
    let _ = writeln!(stderr, "{}", json!({ "error": obj }));
    e.exit_code()
}
