use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fidelity_core::config::{ExperimentConfig, Preset};
use fidelity_core::plot::{emit_plot, PlotStyle};
use fidelity_core::runner::{resolve_out_dir, run_diagnostic, run_experiment, Derived, DiagnosticKind, RunManifest};
use fidelity_core::{parallel, Error};

/// Fidelity decay of the perturbed quantized standard map.
#[derive(Parser)]
#[command(name = "fidelity", version)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the configured fidelity paths and write CSV + manifest.
    Run(Common),
    /// Run a diagnostic: histogram, pair-sep, pair-time or branch-count.
    Diagnose {
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Write a matplotlib script for a CSV produced by `run` or `diagnose`.
    Plot {
        csv: PathBuf,
        /// Manifest to take the floor and Lyapunov guide from
        /// (default: the sibling `<preset>_manifest.json`, if present).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Preset to take decorations from when there is no manifest.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Print the resolved configuration and derived quantities.
    Info(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig1, fig2, fig3, fig4 or custom.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (default: `out` from the config, then
    /// $FIDELITY_OUT_DIR, then ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for Monte Carlo sampling and the classical ensembles.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism; 1 runs sequentially).
    #[arg(long)]
    workers: Option<usize>,
    /// Monte Carlo samples for the IVR path (switches to monte-carlo sampling).
    #[arg(long)]
    samples: Option<usize>,
}

enum Failure {
    Config(anyhow::Error),
    Compute(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.into())
        } else {
            Failure::Compute(e.into())
        }
    }
}

fn config_error(e: anyhow::Error) -> Failure {
    Failure::Config(e)
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let preset = c.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    let mut cfg = match (&c.config, preset) {
        (Some(path), base) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(config_error)?;
            ExperimentConfig::parse_over(&text, base)?
        }
        (None, Some(p)) if p != Preset::Custom => ExperimentConfig::preset(p),
        _ => {
            return Err(Failure::Config(anyhow::anyhow!(
                "config field `preset`: give --preset fig1|fig2|fig3|fig4 or --config PATH"
            )))
        }
    };
    if let Some(seed) = c.seed {
        cfg.seed = Some(seed);
    }
    if let Some(samples) = c.samples {
        cfg.set("samples", &samples.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    let fallback = std::env::var_os("FIDELITY_OUT_DIR")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"));
    resolve_out_dir(c.out.clone(), cfg, fallback)
}

fn with_workers<R: Send>(c: &Common, f: impl FnOnce() -> R + Send) -> R {
    match c.workers {
        Some(w) => parallel::with_workers(w, f),
        None => f(),
    }
}

fn report(manifest: &RunManifest, dir: &Path) {
    for f in &manifest.files {
        println!("wrote {}", dir.join(f).display());
    }
    for (k, v) in &manifest.results {
        println!("{k} = {v:.6e}");
    }
    for w in &manifest.warnings {
        println!("warning: {w}");
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            let dir = out_dir(&c, &cfg);
            let manifest = with_workers(&c, || run_experiment(&cfg, &dir))?;
            report(&manifest, &dir);
        }
        Command::Diagnose { kind, common: c } => {
            let kind: DiagnosticKind = kind.parse()?;
            let cfg = load_config(&c)?;
            let dir = out_dir(&c, &cfg);
            let manifest = with_workers(&c, || run_diagnostic(kind, &cfg, &dir))?;
            report(&manifest, &dir);
        }
        Command::Plot { csv, manifest, preset } => {
            let sibling = csv.file_name().and_then(|n| n.to_str()).and_then(|n| {
                let stem = n.split('_').next()?;
                let p = csv.with_file_name(format!("{stem}_manifest.json"));
                p.exists().then_some(p)
            });
            let style = match (manifest.or(sibling), preset) {
                (_, Some(p)) => PlotStyle::for_config(&ExperimentConfig::preset(p.parse()?)),
                (Some(m), None) => PlotStyle::from_manifest(&m)?,
                (None, None) => PlotStyle::default(),
            };
            let script = emit_plot(&csv, &style)?;
            println!("wrote {}", script.display());
        }
        Command::Info(c) => {
            let cfg = load_config(&c)?;
            let derived = with_workers(&c, || Derived::compute(&cfg))?;
            print!("{}", cfg.to_text());
            println!("output directory = {}", out_dir(&c, &cfg).display());
            println!("workers = {}", with_workers(&c, parallel::worker_count));
            println!(
                "{}",
                serde_json::to_string_pretty(&derived).map_err(|e| Failure::Compute(e.into()))?
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
