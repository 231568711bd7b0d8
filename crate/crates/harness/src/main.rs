use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use tglab::{report, run_ensemble, ExperimentConfig, HarnessError, Kind};

#[derive(Parser)]
#[command(name = "tglab", version, about = "Disordered Tonks-Girardeau ensembles on a ring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Periodic and antiperiodic spectra.
    Spectrum(RunArgs),
    /// Distance-binned eigenfunction correlator and its decay fit.
    Correlator(RunArgs),
    /// Distance-binned block norms of the one-body density matrix.
    Obdm(RunArgs),
    /// Largest eigenvalue and zero-momentum occupation of the density matrix.
    Bec(RunArgs),
    /// Twisted-boundary energy shift and stiffness ratio.
    Stiffness(RunArgs),
    /// Variational trial state and the stiffness upper bound.
    Bound(RunArgs),
    /// Trap release density dynamics.
    Dynamics(RunArgs),
    /// Runs the kind named in the config file.
    Ensemble(RunArgs),
    /// Verifies a run directory and writes summary tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config setting, then `$TGLAB_OUT`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding `manifest.json`.
    run: PathBuf,
    /// Where to write the tables; defaults to `<run>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(kind: Option<Kind>, args: RunArgs) -> Result<(), HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(k) = kind {
        cfg.kind = k;
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let (dir, manifest) = run_ensemble(&cfg, workers, args.out.as_deref())?;
    info!("wrote {} files to {}", manifest.files.len(), dir.display());
    println!("{}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Spectrum(a) => run(Some(Kind::Spectrum), a),
        Command::Correlator(a) => run(Some(Kind::Correlator), a),
        Command::Obdm(a) => run(Some(Kind::Obdm), a),
        Command::Bec(a) => run(Some(Kind::Bec), a),
        Command::Stiffness(a) => run(Some(Kind::Stiffness), a),
        Command::Bound(a) => run(Some(Kind::Bound), a),
        Command::Dynamics(a) => run(Some(Kind::Dynamics), a),
        Command::Ensemble(a) => run(None, a),
        Command::Report(a) => report::report(&a.run, a.out.as_deref()).map(|rep| {
            for (name, _) in &rep.tables {
                println!("{name}");
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
