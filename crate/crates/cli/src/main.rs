use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egmc::harness::{
    run_experiment, spec_from_artifact, ConfigEntries, ExperimentKind, ExperimentSpec, HarnessError,
};
use log::error;

/// Particle-based diffusion simulator for molecular communication channels.
///
/// Lengths are in micrometres, times in seconds and diffusion coefficients
/// in square micrometres per second. Results go to --out, or to stdout.
#[derive(Parser)]
#[command(name = "egmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single 1D run with an absorbing receiver plane.
    Run1d(Common),
    /// Single 3D run with a spherical absorbing receiver.
    Run3d(Common),
    /// Calibrate alpha on a 1D receiver.
    Calibrate1d(Common),
    /// Calibrate alpha on a 3D receiver from repeated ISDCD sweeps.
    Calibrate3d(Common),
    /// Per-step spread of absorbed counts against Poisson noise.
    Noise(Common),
    /// Relative inaccuracy over a range of time steps.
    Inaccuracy(Common),
    /// Regenerate the data behind one figure (fig4 .. fig9).
    Repro {
        figure: String,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run the experiment recorded in a result file.
    Rerun {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Key = value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Diffusion coefficient [um^2/s].
    #[arg(long = "D")]
    diffusion: Option<f64>,
    /// Transmitter distance [um]. For 1D runs, the source position.
    #[arg(long = "L")]
    distance: Option<f64>,
    /// Receiver radius [um].
    #[arg(long = "R")]
    radius: Option<f64>,
    /// Time step [s].
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Result<ConfigEntries, HarnessError> {
        let mut e = ConfigEntries::new();
        let pairs: [(&str, Option<String>); 10] = [
            ("output", self.out.as_ref().map(|p| p.display().to_string())),
            ("format", self.format.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("D_um2_per_s", self.diffusion.map(|v| v.to_string())),
            ("L_um", self.distance.map(|v| v.to_string())),
            ("R_um", self.radius.map(|v| v.to_string())),
            ("dt_s", self.dt.map(|v| v.to_string())),
            ("n_steps", self.steps.map(|v| v.to_string())),
            ("n_particles", self.particles.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                e.set(key, v)?;
            }
        }
        Ok(e)
    }

    fn spec(
        &self,
        kind: ExperimentKind,
        figure: Option<&str>,
    ) -> Result<ExperimentSpec, HarnessError> {
        let mut entries = match &self.config {
            Some(path) => ConfigEntries::load(path)?,
            None => ConfigEntries::new(),
        };
        entries.merge(&self.overrides()?);
        if let Some(f) = figure {
            entries.set("figure", f)?;
        }
        ExperimentSpec::from_entries(Some(kind), &entries)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let (spec, threads) = match cli.command {
        Command::Run1d(c) => (c.spec(ExperimentKind::Run1d, None)?, c.threads),
        Command::Run3d(c) => (c.spec(ExperimentKind::Run3d, None)?, c.threads),
        Command::Calibrate1d(c) => (c.spec(ExperimentKind::Calibrate1d, None)?, c.threads),
        Command::Calibrate3d(c) => (c.spec(ExperimentKind::Calibrate3d, None)?, c.threads),
        Command::Noise(c) => (c.spec(ExperimentKind::NoiseProfile, None)?, c.threads),
        Command::Inaccuracy(c) => (c.spec(ExperimentKind::InaccuracySweep, None)?, c.threads),
        Command::Repro { figure, common } => (
            common.spec(ExperimentKind::FigureRepro, Some(&figure))?,
            common.threads,
        ),
        Command::Rerun { file, out, threads } => {
            let mut spec = spec_from_artifact(&file)?;
            spec.output = out;
            (spec, threads)
        }
    };

    let artifact = run_experiment(&spec, threads)?;
    if spec.output.is_none() {
        std::io::stdout()
            .write_all(artifact.render(spec.format).as_bytes())
            .map_err(|e| HarnessError::Output(format!("stdout: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
