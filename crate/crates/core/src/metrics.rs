//! Comparison measures between simulated and closed-form channel responses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::analytic::{AnalyticCurve, ChannelGeometry};
use crate::engines::{run_3d, AbsorptionRecord, RunConfig};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::DEFAULT_ALPHA;

/// Cells with a smaller expected count are pooled with their neighbours
/// before the chi-squared sum.
pub const CHI2_MIN_EXPECTED: f64 = 5.0;

fn same_len(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::Shape { left, right })
    }
}

/// Integrated squared difference of two cumulative absorption curves sampled
/// on the same time grid.
pub fn isdcd(sim_cumulative: &[f64], anl_cumulative: &[f64]) -> Result<f64> {
    same_len(sim_cumulative.len(), anl_cumulative.len())?;
    Ok(sim_cumulative
        .iter()
        .zip(anl_cumulative)
        .map(|(s, a)| (s - a).powi(2))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub reduced: f64,
    /// Number of pooled cells minus one.
    pub dof: usize,
}

/// Reduced chi-squared of per-step absorbed counts against the Poisson model
/// `mean = variance = n_particles * per_step_fraction`.
pub fn chi2_red(
    sim_counts: &[u64],
    anl_per_step_fraction: &[f64],
    n_particles: usize,
) -> Result<ChiSquared> {
    same_len(sim_counts.len(), anl_per_step_fraction.len())?;
    let expected = anl_per_step_fraction.iter().map(|f| f * n_particles as f64);
    let observed = sim_counts.iter().map(|&c| c as f64);

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs_acc, mut exp_acc) = (0.0, 0.0);
    for (o, e) in observed.zip(expected) {
        obs_acc += o;
        exp_acc += e;
        if exp_acc >= CHI2_MIN_EXPECTED {
            cells.push((obs_acc, exp_acc));
            obs_acc = 0.0;
            exp_acc = 0.0;
        }
    }
    match cells.last_mut() {
        Some(last) => {
            last.0 += obs_acc;
            last.1 += exp_acc;
        }
        None => {
            return Err(Error::UndefinedStatistic(format!(
                "no cell reaches an expected count of {CHI2_MIN_EXPECTED}"
            )))
        }
    }
    if cells.len() < 2 {
        return Err(Error::UndefinedStatistic(
            "a single pooled cell leaves no degrees of freedom".into(),
        ));
    }
    let dof = cells.len() - 1;
    let sum: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    Ok(ChiSquared {
        reduced: sum / dof as f64,
        dof,
    })
}

/// Step length relative to the transmitter-receiver gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Locality {
    /// `sqrt(2 D dt)` in micrometres.
    pub step_length: f64,
    /// `sqrt(2 D dt) / (L - R)`.
    pub ratio: f64,
    pub ok: bool,
}

pub fn locality_check(geom: &ChannelGeometry, dt: f64) -> Locality {
    let step_length = (2.0 * geom.diffusion() * dt).sqrt();
    let ratio = step_length / geom.gap();
    Locality {
        step_length,
        ratio,
        ok: ratio <= 1.0,
    }
}

/// Iteration count covering six peak times, and never fewer than 100 steps.
pub fn default_steps(geom: &ChannelGeometry, dt: f64) -> usize {
    ((6.0 * geom.peak_time() / dt).ceil() as usize).max(100)
}

/// Measured and Poisson-predicted spread of per-step absorbed counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub n_repeats: usize,
    /// Sample standard deviation of `sim - anl` counts per step.
    pub measured_std: Vec<f64>,
    /// `sqrt(n_particles * per_step_fraction)`.
    pub poisson_std: Vec<f64>,
    /// One standard deviation of a sample standard deviation drawn from
    /// `n_repeats` normal values with the Poisson width.
    pub band: Vec<f64>,
}

impl NoiseProfile {
    /// Fraction of steps whose measured spread lies within `k` band widths of
    /// the Poisson prediction. Steps where the prediction is exactly zero are
    /// skipped.
    pub fn fraction_within(&self, k: f64) -> f64 {
        let mut inside = 0usize;
        let mut total = 0usize;
        for ((m, p), b) in self
            .measured_std
            .iter()
            .zip(&self.poisson_std)
            .zip(&self.band)
        {
            if *p == 0.0 {
                continue;
            }
            total += 1;
            if (m - p).abs() <= k * b {
                inside += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            inside as f64 / total as f64
        }
    }
}

/// Relative spread of the sample standard deviation of `n` normal draws,
/// `sqrt(1 - 2 Gamma(n/2)^2 / ((n - 1) Gamma((n-1)/2)^2))`.
pub fn std_of_sample_std(n: usize) -> f64 {
    assert!(n >= 2, "need at least two samples");
    let nf = n as f64;
    let log_ratio = ln_gamma(nf / 2.0) - ln_gamma((nf - 1.0) / 2.0);
    let c4_sq = 2.0 / (nf - 1.0) * (2.0 * log_ratio).exp();
    (1.0 - c4_sq).max(0.0).sqrt()
}

pub fn poisson_noise_profile(
    config: &RunConfig<ChannelGeometry>,
    n_repeats: usize,
) -> Result<NoiseProfile> {
    let seeds: Vec<u64> = (0..n_repeats as u64)
        .map(|i| derive_seed(config.seed, &[i]))
        .collect();
    poisson_noise_profile_with_seeds(config, &seeds)
}

/// Like [`poisson_noise_profile`] with the seed of every repeat given
/// explicitly.
pub fn poisson_noise_profile_with_seeds(
    config: &RunConfig<ChannelGeometry>,
    seeds: &[u64],
) -> Result<NoiseProfile> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!(
            "noise profiling needs at least two repeats, got {}",
            seeds.len()
        )));
    }
    let curve = config.geometry.discretize(config.dt, config.n_steps)?;
    let expected = curve.expected_counts(config.n_particles);
    let records: Vec<AbsorptionRecord<3>> = seeds
        .par_iter()
        .map(|&seed| {
            run_3d(&RunConfig {
                seed,
                ..config.clone()
            })
        })
        .collect::<Result<_>>()?;

    let n = records.len() as f64;
    let measured_std = (0..config.n_steps)
        .map(|i| {
            let counts = records.iter().map(|r| r.counts[i] as f64);
            let mean = counts.clone().sum::<f64>() / n;
            (counts.map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect();
    let poisson_std: Vec<f64> = expected.iter().map(|e| e.max(0.0).sqrt()).collect();
    let rel = std_of_sample_std(records.len());
    let band = poisson_std.iter().map(|s| s * rel).collect();
    Ok(NoiseProfile {
        n_repeats: records.len(),
        measured_std,
        poisson_std,
        band,
    })
}

/// ISDCD of one 3D run against the closed form on the same grid.
pub fn run_isdcd(config: &RunConfig<ChannelGeometry>) -> Result<f64> {
    let record = run_3d(config)?;
    let curve = config.geometry.discretize(config.dt, config.n_steps)?;
    isdcd(
        &record.cumulative_fraction(config.n_particles),
        &curve.cumulative,
    )
}

/// `ISDCD(alpha = 0.8235) / ISDCD(alpha = 0)` for independent runs on the
/// default iteration grid.
pub fn relative_inaccuracy(
    geom: &ChannelGeometry,
    dt: f64,
    n_particles: usize,
    seed: u64,
) -> Result<f64> {
    let n_steps = default_steps(geom, dt);
    let egmc = RunConfig::new_3d(
        *geom,
        dt,
        n_steps,
        n_particles,
        DEFAULT_ALPHA,
        derive_seed(seed, &[0]),
    );
    let plain = RunConfig::new_3d(
        *geom,
        dt,
        n_steps,
        n_particles,
        0.0,
        derive_seed(seed, &[1]),
    );
    let (egmc, plain) = rayon::join(|| run_isdcd(&egmc), || run_isdcd(&plain));
    let (egmc, plain) = (egmc?, plain?);
    if plain == 0.0 {
        return Err(Error::UndefinedStatistic(
            "plain Monte Carlo reproduced the closed form exactly".into(),
        ));
    }
    Ok(egmc / plain)
}

/// Summary of one simulated run against the closed-form response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub isdcd: f64,
    pub chi2_red: f64,
    pub n_dof: usize,
    pub relative_inaccuracy: Option<f64>,
    pub locality_ok: bool,
    pub step_length_ratio: f64,
}

impl ErrorReport {
    pub fn new(
        config: &RunConfig<ChannelGeometry>,
        record: &AbsorptionRecord<3>,
        curve: &AnalyticCurve,
    ) -> Result<Self> {
        let isdcd = isdcd(
            &record.cumulative_fraction(config.n_particles),
            &curve.cumulative,
        )?;
        let chi2 = chi2_red(&record.counts, &curve.per_step_fraction, config.n_particles)?;
        let locality = locality_check(&config.geometry, config.dt);
        Ok(Self {
            isdcd,
            chi2_red: chi2.reduced,
            n_dof: chi2.dof,
            relative_inaccuracy: None,
            locality_ok: locality.ok,
            step_length_ratio: locality.ratio,
        })
    }
}
