use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use capaboost::rankcheck::{RankMethod, RankSweepConfig, RankTrialConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::execute;
use crate::error::CliError;
use crate::manifest::{AccountingCommand, Command, Manifest, Theorem1Command};
use crate::output::{resolve_out_dir, OutputDir};

#[derive(Parser)]
#[command(name = "capaboost", version, about = "Rank, accounting and training experiments for masked low-rank adapters")]
struct Cli {
    /// Output directory; overrides CAPABOOST_OUT_DIR and the manifest.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Monte-Carlo check that rank(X + Y) = rank(X) + rank(Y) for random rank-r X, Y.
    Theorem1(Theorem1Args),
    /// Effective-weight ranks over the (r, d) grid.
    RankTable(RankTableArgs),
    /// Parameter and FLOP accounting.
    Accounting(ManifestArg),
    /// Density or dimension sweep from a manifest.
    Sweep(RequiredManifest),
    /// A single training run from a manifest.
    TrainOne(RequiredManifest),
}

#[derive(Args)]
struct Theorem1Args {
    #[arg(long, conflicts_with_all = ["d_dim", "r", "trials", "seed", "rel_tol"])]
    manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    d_dim: Option<usize>,
    #[arg(long, required_unless_present = "manifest")]
    r: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rel_tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dense,
    Factored,
}

#[derive(Args)]
struct RankTableArgs {
    #[arg(long, conflicts_with_all = ["dim", "method"])]
    manifest: Option<PathBuf>,
    /// Square layer size (default 768).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Args)]
struct ManifestArg {
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct RequiredManifest {
    #[arg(long)]
    manifest: PathBuf,
}

fn load_or(path: Option<&Path>, fallback: impl FnOnce() -> Command) -> Result<Manifest, CliError> {
    match path {
        Some(p) => Manifest::load(p),
        None => Ok(Manifest::new(fallback())),
    }
}

fn expect_command(m: &Manifest, name: &str) -> Result<(), CliError> {
    if m.command.name() == name {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "manifest describes `{}`, not `{name}`",
            m.command.name()
        )))
    }
}

fn build_manifest(cmd: &Sub) -> Result<Manifest, CliError> {
    let m = match cmd {
        Sub::Theorem1(a) => load_or(a.manifest.as_deref(), || {
            let mut cfg = RankTrialConfig::new(
                a.d_dim.unwrap_or_default(),
                a.r.unwrap_or_default(),
                a.trials.unwrap_or(1000),
                a.seed.unwrap_or(0),
            );
            if let Some(tol) = a.rel_tol {
                cfg.rel_tol = tol;
            }
            Command::Theorem1(Theorem1Command { configs: vec![cfg] })
        })?,
        Sub::RankTable(a) => load_or(a.manifest.as_deref(), || {
            let mut cfg = RankSweepConfig::default();
            if let Some(n) = a.dim {
                cfg.d1 = n;
                cfg.d2 = n;
            }
            if let Some(m) = a.method {
                cfg.method = match m {
                    MethodArg::Dense => RankMethod::Dense,
                    MethodArg::Factored => RankMethod::Factored,
                };
            }
            Command::RankTable(cfg)
        })?,
        Sub::Accounting(a) => load_or(a.manifest.as_deref(), || {
            Command::Accounting(AccountingCommand::paper_grid())
        })?,
        Sub::Sweep(a) | Sub::TrainOne(a) => Manifest::load(&a.manifest)?,
    };
    let name = match cmd {
        Sub::Theorem1(_) => "theorem1",
        Sub::RankTable(_) => "rank-table",
        Sub::Accounting(_) => "accounting",
        Sub::Sweep(_) => "sweep",
        Sub::TrainOne(_) => "train-one",
    };
    expect_command(&m, name)?;
    Ok(m)
}

fn run(
    cli: &Cli,
    env_out_dir: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<bool, CliError> {
    let manifest = build_manifest(&cli.cmd)?;
    let root = resolve_out_dir(cli.out_dir.as_deref(), env_out_dir, manifest.output_dir.as_deref());
    let mut out = OutputDir::create(root)?;
    let outcome = execute(&manifest, &mut out)?;
    writeln!(stdout, "{}", outcome.summary.trim_end())?;
    for p in out.written() {
        writeln!(stderr, "wrote {}", p.display())?;
    }
    Ok(outcome.ok)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 when a run fails or a checked property
/// does not hold, 2 on usage errors. `env_out_dir` is the value of
/// `CAPABOOST_OUT_DIR`, passed in so callers control the environment.
pub fn run_cli<I, T>(args: I, env_out_dir: Option<OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let env_out_dir = env_out_dir.filter(|v| !v.is_empty()).map(PathBuf::from);
    match run(&cli, env_out_dir.as_deref(), stdout, stderr) {
        Ok(true) => 0,
        Ok(false) => {
            let _ = writeln!(stderr, "capaboost: a checked property did not hold");
            1
        }
        Err(e) => {
            let _ = writeln!(stderr, "capaboost: {e}");
            e.exit_code()
        }
    }
}

