//! Experiment orchestration behind the `egmc` command-line tool.
//!
//! An [`ExperimentSpec`] is built from a configuration file and command-line
//! overrides, executed into an [`Artifact`] and written as CSV or JSON. Each
//! artifact embeds the configuration that produced it, so
//! [`spec_from_artifact`] can rerun it exactly.

mod config;
mod experiments;
mod output;

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::info;
use thiserror::Error;

pub use config::{
    load_config, ConfigEntries, ExperimentKind, ExperimentSpec, Figure, OutputFormat, Params,
    VALID_KEYS,
};
pub use experiments::{execute, fig8_settings, fig9_cases, FIG9_RATIOS};
pub use output::{embedded_config, tool_version, Artifact, Cell};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("cannot write output: {0}")]
    Output(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) => 2,
            Self::Output(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<crate::Error> for HarnessError {
    fn from(e: crate::Error) -> Self {
        use crate::Error as E;
        match e {
            E::Domain(_) | E::Config(_) | E::Shape { .. } => Self::Invalid(e.to_string()),
            E::Io(_) => Self::Output(e.to_string()),
            E::UndefinedStatistic(_) | E::Calibration(_) | E::Quadrature(_) | E::Json(_) => {
                Self::Numerical(e.to_string())
            }
        }
    }
}

/// Runs `spec` on a pool of `threads` workers (all cores when `None`) and
/// writes the artifact to `spec.output`, if set. The output file is created
/// before any simulation starts.
pub fn run_experiment(
    spec: &ExperimentSpec,
    threads: Option<usize>,
) -> Result<Artifact, HarnessError> {
    let mut file = spec
        .output
        .as_deref()
        .map(|path| {
            File::create(path).map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))
        })
        .transpose()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Invalid(format!("thread pool: {e}")))?;
    let started = Instant::now();
    let artifact = pool.install(|| execute(spec))?;
    info!(
        "{} finished in {:.3} s",
        spec.kind,
        started.elapsed().as_secs_f64()
    );

    if let (Some(file), Some(path)) = (file.as_mut(), spec.output.as_deref()) {
        file.write_all(artifact.render(spec.format).as_bytes())
            .map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))?;
    }
    Ok(artifact)
}

/// Rebuilds the experiment that produced a result file.
pub fn spec_from_artifact(path: &Path) -> Result<ExperimentSpec, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let pairs = embedded_config(&text).ok_or_else(|| {
        HarnessError::Invalid(format!("{} carries no experiment metadata", path.display()))
    })?;
    let mut entries = ConfigEntries::new();
    for (k, v) in pairs {
        entries.set(&k, v)?;
    }
    ExperimentSpec::from_entries(None, &entries)
}

/// Writes `artifact` to `path`, mapping failures to exit status 3.
pub fn write_artifact(
    artifact: &Artifact,
    path: &Path,
    format: OutputFormat,
) -> Result<(), HarnessError> {
    std::fs::write(path, artifact.render(format))
        .map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))
}
