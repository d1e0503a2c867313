//! The `spl` command line.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::feature_store::{
    gen_synth, read_fvec, read_labels, read_matrix, write_fvec, write_labels, Domain, FeatureSet,
    FormatError, SynthParams,
};
use crate::pipeline::{adapt, eval_ncm_baseline, AdaptConfig, AdaptError, DEFAULT_ITERATIONS};
use crate::subspace::DEFAULT_RHO;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "spl",
    version,
    about = "Selective pseudo-labelling domain adaptation on feature vectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Adapt a labelled source to an unlabelled target and write target predictions.
    Adapt(AdaptArgs),
    /// Score nearest-class-mean on raw features without adaptation.
    Baseline(BaselineArgs),
    /// Write a synthetic shifted-blob source/target pair.
    GenSynth(GenSynthArgs),
    /// Print shape and value statistics of an FVEC file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub source_labels: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Ground truth for reporting only.
    #[arg(long)]
    pub target_labels: Option<PathBuf>,
    /// Subspace dimension (defaults to the number of classes).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub dim: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS as u32, value_parser = clap::value_parser!(u32).range(1..))]
    pub iters: u32,
    #[arg(long, default_value_t = DEFAULT_RHO, value_parser = non_negative)]
    pub rho: f64,
    /// Predicted target labels, one per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Run report as JSON.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub source_labels: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub target_labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(2..))]
    pub classes: u32,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(2..))]
    pub per_class: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(2..))]
    pub dim: u32,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true, value_parser = finite)]
    pub shift: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true, value_parser = finite)]
    pub rotation: f64,
    /// Files are written as `<prefix>_source.fvec`, `<prefix>_source.labels`, etc.
    #[arg(long)]
    pub out_prefix: String,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not finite"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = finite(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} is negative"))
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn load_labelled(features: &Path, labels: &Path, domain: Domain) -> Result<FeatureSet, CliError> {
    Ok(read_fvec(features, domain)?.with_labels(read_labels(labels)?)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_adapt(args: &AdaptArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let source = load_labelled(&args.source, &args.source_labels, Domain::Source)?;
    let mut target = read_fvec(&args.target, Domain::Target)?;
    if let Some(path) = &args.target_labels {
        target = target.with_labels(read_labels(path)?)?;
    }
    let cfg = AdaptConfig {
        iterations: args.iters as usize,
        dim: args.dim.map(|d| d as usize),
        rho: args.rho,
        ..AdaptConfig::default()
    };
    let result = adapt(&source, &target, &cfg)?;
    write_labels(&result.predictions, &args.out)?;
    write_text(&args.report, &(result.report.to_json() + "\n"))?;
    if let Some(acc) = result.report.final_accuracy {
        let _ = writeln!(out, "accuracy={acc:.4}");
    }
    Ok(())
}

fn cmd_baseline(args: &BaselineArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let source = load_labelled(&args.source, &args.source_labels, Domain::Source)?;
    let target = load_labelled(&args.target, &args.target_labels, Domain::Target)?;
    let acc = eval_ncm_baseline(&source, &target)?;
    let _ = writeln!(out, "accuracy={acc:.4}");
    Ok(())
}

fn cmd_gen_synth(args: &GenSynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pair = gen_synth(&SynthParams {
        seed: args.seed,
        n_per_class: args.per_class as usize,
        num_classes: args.classes as usize,
        dim: args.dim as usize,
        shift: args.shift,
        rotation: args.rotation,
    })?;
    let path = |suffix: &str| PathBuf::from(format!("{}_{suffix}", args.out_prefix));
    let source_labels = pair.source.labels().expect("generated source is labelled");
    let files = [
        path("source.fvec"),
        path("source.labels"),
        path("target.fvec"),
        path("target.labels"),
    ];
    write_fvec(&pair.source, &files[0])?;
    write_labels(source_labels, &files[1])?;
    write_fvec(&pair.target, &files[2])?;
    write_labels(&pair.target_labels, &files[3])?;
    for f in &files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
    Ok(())
}

fn cmd_inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let m = read_matrix(&args.path)?;
    let nan = m.iter().filter(|v| v.is_nan()).count();
    let finite: Vec<f64> = m
        .iter()
        .filter(|v| v.is_finite())
        .map(|&v| f64::from(v))
        .collect();
    let (min, max, mean) = if finite.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            finite.iter().copied().fold(f64::INFINITY, f64::min),
            finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            finite.iter().sum::<f64>() / finite.len() as f64,
        )
    };
    let _ = writeln!(
        out,
        "n={} d={} min={min:.6} max={max:.6} mean={mean:.6} nan={nan}",
        m.nrows(),
        m.ncols()
    );
    Ok(())
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Adapt(args) => cmd_adapt(args, out),
        Command::Baseline(args) => cmd_baseline(args, out),
        Command::GenSynth(args) => cmd_gen_synth(args, out),
        Command::Inspect(args) => cmd_inspect(args, out),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            };
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}
