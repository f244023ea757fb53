//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Every key a configuration file or result header may contain. Physical
/// quantities carry their unit in the name.
pub const VALID_KEYS: &[&str] = &[
    "experiment",
    "figure",
    "format",
    "output",
    "D_um2_per_s",
    "L_um",
    "R_um",
    "r_x_um",
    "dt_s",
    "n_steps",
    "n_particles",
    "alpha",
    "seed",
    "n_repeats",
    "alpha_min",
    "alpha_max",
    "alpha_points",
    "dt_min_s",
    "dt_max_s",
    "dt_points",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Run1d,
    Run3d,
    Calibrate1d,
    Calibrate3d,
    NoiseProfile,
    InaccuracySweep,
    FigureRepro,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Run1d => "run1d",
            Self::Run3d => "run3d",
            Self::Calibrate1d => "calibrate1d",
            Self::Calibrate3d => "calibrate3d",
            Self::NoiseProfile => "noise",
            Self::InaccuracySweep => "inaccuracy",
            Self::FigureRepro => "repro",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "run1d" => Self::Run1d,
            "run3d" => Self::Run3d,
            "calibrate1d" => Self::Calibrate1d,
            "calibrate3d" => Self::Calibrate3d,
            "noise" | "noise_profile" => Self::NoiseProfile,
            "inaccuracy" | "inaccuracy_sweep" => Self::InaccuracySweep,
            "repro" | "figure_repro" => Self::FigureRepro,
            other => {
                return Err(HarnessError::Invalid(format!(
                    "unknown experiment '{other}' (expected run1d, run3d, calibrate1d, \
                     calibrate3d, noise, inaccuracy or repro)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
            Self::Fig7 => "fig7",
            Self::Fig8 => "fig8",
            Self::Fig9 => "fig9",
        }
    }
}

impl FromStr for Figure {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "fig4" => Self::Fig4,
            "fig5" => Self::Fig5,
            "fig6" => Self::Fig6,
            "fig7" => Self::Fig7,
            "fig8" => Self::Fig8,
            "fig9" => Self::Fig9,
            other => {
                return Err(HarnessError::Invalid(format!(
                    "unknown figure '{other}' (expected fig4 .. fig9)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(HarnessError::Invalid(format!(
                "unknown format '{other}' (expected csv or json)"
            ))),
        }
    }
}

/// Raw configuration entries, validated against [`VALID_KEYS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigEntries(BTreeMap<String, String>);

impl ConfigEntries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Invalid(format!("line {}: expected key = value", lineno + 1))
            })?;
            entries.set(key.trim(), value.trim())?;
        }
        Ok(entries)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), HarnessError> {
        if !VALID_KEYS.contains(&key) {
            return Err(HarnessError::Invalid(format!(
                "unknown key '{key}'; valid keys: {}",
                VALID_KEYS.join(", ")
            )));
        }
        self.0.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Entries of `overrides` replace those already present.
    pub fn merge(&mut self, overrides: &ConfigEntries) {
        for (k, v) in &overrides.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| HarnessError::Invalid(format!("key '{key}': cannot parse '{v}'")))
            })
            .transpose()
    }
}

/// Every tunable of an experiment after parsing. `None` means "use the
/// experiment's default" or, for required quantities, "missing".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub diffusion: Option<f64>,
    pub distance: Option<f64>,
    pub radius: Option<f64>,
    pub receiver_position: Option<f64>,
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub n_particles: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub n_repeats: Option<usize>,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub alpha_points: Option<usize>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub dt_points: Option<usize>,
}

impl Params {
    pub fn require<T: Copy>(value: Option<T>, key: &str) -> Result<T, HarnessError> {
        value.ok_or_else(|| HarnessError::Invalid(format!("missing required key '{key}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub figure: Option<Figure>,
    pub params: Params,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentSpec {
    pub fn from_entries(
        kind: Option<ExperimentKind>,
        entries: &ConfigEntries,
    ) -> Result<Self, HarnessError> {
        let kind = match (kind, entries.get("experiment")) {
            (Some(k), _) => k,
            (None, Some(name)) => name.parse()?,
            (None, None) => {
                return Err(HarnessError::Invalid(
                    "missing required key 'experiment'".into(),
                ))
            }
        };
        let figure = entries.get("figure").map(str::parse).transpose()?;
        if kind == ExperimentKind::FigureRepro && figure.is_none() {
            return Err(HarnessError::Invalid(
                "missing required key 'figure'".into(),
            ));
        }
        let params = Params {
            diffusion: entries.parse_value("D_um2_per_s")?,
            distance: entries.parse_value("L_um")?,
            radius: entries.parse_value("R_um")?,
            receiver_position: entries.parse_value("r_x_um")?,
            dt: entries.parse_value("dt_s")?,
            n_steps: entries.parse_value("n_steps")?,
            n_particles: entries.parse_value("n_particles")?,
            alpha: entries.parse_value("alpha")?,
            seed: entries.parse_value("seed")?,
            n_repeats: entries.parse_value("n_repeats")?,
            alpha_min: entries.parse_value("alpha_min")?,
            alpha_max: entries.parse_value("alpha_max")?,
            alpha_points: entries.parse_value("alpha_points")?,
            dt_min: entries.parse_value("dt_min_s")?,
            dt_max: entries.parse_value("dt_max_s")?,
            dt_points: entries.parse_value("dt_points")?,
        };
        let format = entries
            .get("format")
            .map(str::parse)
            .transpose()?
            .unwrap_or_default();
        Ok(Self {
            kind,
            figure,
            params,
            output: entries.get("output").map(PathBuf::from),
            format,
        })
    }

    /// The configuration entries that reproduce this experiment. Output
    /// location is not part of it.
    pub fn to_entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        let mut out = vec![("experiment", self.kind.name().to_string())];
        if let Some(f) = self.figure {
            out.push(("figure", f.name().to_string()));
        }
        out.push(("format", self.format.name().to_string()));
        fn push<T: ToString>(
            out: &mut Vec<(&'static str, String)>,
            key: &'static str,
            v: Option<T>,
        ) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        push(&mut out, "D_um2_per_s", p.diffusion);
        push(&mut out, "L_um", p.distance);
        push(&mut out, "R_um", p.radius);
        push(&mut out, "r_x_um", p.receiver_position);
        push(&mut out, "dt_s", p.dt);
        push(&mut out, "n_steps", p.n_steps);
        push(&mut out, "n_particles", p.n_particles);
        push(&mut out, "alpha", p.alpha);
        push(&mut out, "seed", p.seed);
        push(&mut out, "n_repeats", p.n_repeats);
        push(&mut out, "alpha_min", p.alpha_min);
        push(&mut out, "alpha_max", p.alpha_max);
        push(&mut out, "alpha_points", p.alpha_points);
        push(&mut out, "dt_min_s", p.dt_min);
        push(&mut out, "dt_max_s", p.dt_max);
        push(&mut out, "dt_points", p.dt_points);
        out
    }
}

/// Reads an experiment from a configuration file. The file must name the
/// experiment with an `experiment = ...` entry.
pub fn load_config(path: &Path) -> Result<ExperimentSpec, HarnessError> {
    ExperimentSpec::from_entries(None, &ConfigEntries::load(path)?)
}
