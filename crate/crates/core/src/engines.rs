//! Conventional Monte Carlo and EG-MC simulation engines.
//!
//! Both engines follow the same loop: every free particle takes a Gaussian
//! step, then every particle inside the effective boundary
//! `receiver + alpha * sqrt(D dt)` is removed and counted for that step.
//! `alpha = 0` is plain Monte Carlo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::ChannelGeometry;
use crate::error::{config, domain, Error, Result};
use crate::rng::{partition_sizes, ParticleEnsemble, RngStream, StepKernel};

/// Half-line absorber for the 1D toy model: particles are absorbed once they
/// reach `x < position`. The source sits at `source > position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Receiver1D {
    position: f64,
    source: f64,
    diffusion: f64,
}

impl Receiver1D {
    pub fn new(position: f64, source: f64, diffusion: f64) -> Result<Self> {
        if !(source > position && source.is_finite() && position.is_finite()) {
            return Err(domain(format!(
                "source {source} must lie beyond the receiver at {position}"
            )));
        }
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(domain(format!(
                "diffusion coefficient must be positive, got {diffusion}"
            )));
        }
        Ok(Self {
            position,
            source,
            diffusion,
        })
    }

    /// Receiver at the origin.
    pub fn at_origin(source: f64, diffusion: f64) -> Result<Self> {
        Self::new(0.0, source, diffusion)
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    pub fn source(&self) -> f64 {
        self.source
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }
}

/// Geometry that an engine run can be configured with.
pub trait Geometry {
    fn diffusion(&self) -> f64;
    /// Position of the true receiver boundary along the source axis.
    fn boundary(&self) -> f64;
    /// Distance of the source from the origin along the same axis.
    fn source_distance(&self) -> f64;
}

impl Geometry for Receiver1D {
    fn diffusion(&self) -> f64 {
        self.diffusion
    }
    fn boundary(&self) -> f64 {
        self.position
    }
    fn source_distance(&self) -> f64 {
        self.source
    }
}

impl Geometry for ChannelGeometry {
    fn diffusion(&self) -> f64 {
        ChannelGeometry::diffusion(self)
    }
    fn boundary(&self) -> f64 {
        self.radius()
    }
    fn source_distance(&self) -> f64 {
        self.distance()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig<G> {
    pub geometry: G,
    pub dt: f64,
    pub n_steps: usize,
    pub n_particles: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Keep the post-step position of every absorbed particle.
    pub record_positions: bool,
}

impl<G: Geometry> RunConfig<G> {
    /// Thickness added to the receiver, `alpha * sqrt(D dt)`.
    pub fn boundary_shift(&self) -> f64 {
        self.alpha * (self.geometry.diffusion() * self.dt).sqrt()
    }

    /// Position (1D) or radius (3D) of the effective absorbing boundary.
    pub fn effective_boundary(&self) -> f64 {
        self.geometry.boundary() + self.boundary_shift()
    }

    /// Simulated duration, `dt * n_steps`.
    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(config(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if self.n_steps == 0 {
            return Err(config("at least one time step is required"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(config(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        let boundary = self.effective_boundary();
        if boundary >= self.geometry.source_distance() {
            return Err(config(format!(
                "effective boundary {boundary} reaches the transmitter at {}",
                self.geometry.source_distance()
            )));
        }
        Ok(())
    }
}

impl RunConfig<Receiver1D> {
    pub fn new_1d(
        receiver: Receiver1D,
        dt: f64,
        n_steps: usize,
        n_particles: usize,
        alpha: f64,
        seed: u64,
    ) -> Self {
        Self {
            geometry: receiver,
            dt,
            n_steps,
            n_particles,
            alpha,
            seed,
            record_positions: true,
        }
    }
}

impl RunConfig<ChannelGeometry> {
    pub fn new_3d(
        geometry: ChannelGeometry,
        dt: f64,
        n_steps: usize,
        n_particles: usize,
        alpha: f64,
        seed: u64,
    ) -> Self {
        Self {
            geometry,
            dt,
            n_steps,
            n_particles,
            alpha,
            seed,
            record_positions: false,
        }
    }
}

/// Per-step absorbed counts of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionRecord<const N: usize> {
    /// Particles absorbed during step `i`, i.e. by time `(i + 1) dt`.
    pub counts: Vec<u64>,
    #[serde(skip)]
    pub positions: Option<Vec<[f64; N]>>,
    pub survivors: u64,
}

impl<const N: usize> AbsorptionRecord<N> {
    pub fn total_absorbed(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn n_particles(&self) -> u64 {
        self.total_absorbed() + self.survivors
    }

    /// Running total of absorbed particles divided by `n_particles`.
    pub fn cumulative_fraction(&self, n_particles: usize) -> Vec<f64> {
        let mut total = 0u64;
        self.counts
            .iter()
            .map(|&c| {
                total += c;
                if n_particles == 0 {
                    0.0
                } else {
                    total as f64 / n_particles as f64
                }
            })
            .collect()
    }

    fn merge(parts: Vec<Self>, n_steps: usize, record: bool) -> Self {
        let mut merged = Self {
            counts: vec![0; n_steps],
            positions: record.then(Vec::new),
            survivors: 0,
        };
        for part in parts {
            for (m, c) in merged.counts.iter_mut().zip(&part.counts) {
                *m += c;
            }
            merged.survivors += part.survivors;
            if let (Some(all), Some(p)) = (merged.positions.as_mut(), part.positions) {
                all.extend(p);
            }
        }
        merged
    }
}

/// Runs every partition of the ensemble through the full time loop. Each
/// partition owns the random stream `(seed, partition index)`, so the merged
/// record does not depend on the rayon thread count.
fn simulate<const N: usize, F>(
    start: [f64; N],
    kernel: StepKernel,
    n_steps: usize,
    n_particles: usize,
    seed: u64,
    record: bool,
    is_absorbed: F,
) -> AbsorptionRecord<N>
where
    F: Fn(&[f64; N]) -> bool + Sync,
{
    let partitions: Vec<(u64, usize)> = partition_sizes(n_particles)
        .enumerate()
        .map(|(id, size)| (id as u64, size))
        .collect();

    let parts: Vec<AbsorptionRecord<N>> = partitions
        .par_iter()
        .map(|&(stream_id, size)| {
            let mut rng = RngStream::new(seed, stream_id);
            let mut ensemble = ParticleEnsemble::at_point(start, size);
            let mut counts = Vec::with_capacity(n_steps);
            let mut positions = record.then(Vec::new);
            for _ in 0..n_steps {
                if ensemble.is_empty() {
                    counts.push(0);
                    continue;
                }
                ensemble.step(&mut rng, &kernel);
                counts.push(ensemble.absorb(&is_absorbed, positions.as_mut()) as u64);
            }
            AbsorptionRecord {
                counts,
                positions,
                survivors: ensemble.alive_count() as u64,
            }
        })
        .collect();

    AbsorptionRecord::merge(parts, n_steps, record)
}

/// 1D toy model: particles start at the source and are absorbed on the half
/// line below the (shifted) receiver.
pub fn run_1d(config: &RunConfig<Receiver1D>) -> Result<AbsorptionRecord<1>> {
    config.validate()?;
    let kernel = StepKernel::new(config.geometry.diffusion(), config.dt)?;
    let boundary = config.effective_boundary();
    Ok(simulate(
        [config.geometry.source()],
        kernel,
        config.n_steps,
        config.n_particles,
        config.seed,
        config.record_positions,
        |p: &[f64; 1]| p[0] < boundary,
    ))
}

/// Spherical receiver centred at the origin, point source at `(0, 0, L)`.
pub fn run_3d(config: &RunConfig<ChannelGeometry>) -> Result<AbsorptionRecord<3>> {
    config.validate()?;
    let kernel = StepKernel::new(config.geometry.diffusion(), config.dt)?;
    let boundary = config.effective_boundary();
    let boundary_sq = boundary * boundary;
    Ok(simulate(
        [0.0, 0.0, config.geometry.distance()],
        kernel,
        config.n_steps,
        config.n_particles,
        config.seed,
        config.record_positions,
        |p: &[f64; 3]| p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < boundary_sq,
    ))
}

/// Mean signed distance of the recorded absorption positions from the true
/// receiver position. Negative for plain Monte Carlo.
pub fn absorption_index_1d(record: &AbsorptionRecord<1>, receiver: &Receiver1D) -> Result<f64> {
    let positions = record
        .positions
        .as_ref()
        .ok_or_else(|| config("absorption positions were not recorded"))?;
    if positions.is_empty() {
        return Err(Error::UndefinedStatistic(
            "absorption index of a run with no absorbed particles".into(),
        ));
    }
    let sum: f64 = positions.iter().map(|p| p[0] - receiver.position()).sum();
    Ok(sum / positions.len() as f64)
}

/// Sample standard error of the absorption index.
pub fn absorption_index_stderr(record: &AbsorptionRecord<1>, receiver: &Receiver1D) -> Result<f64> {
    let mean = absorption_index_1d(record, receiver)?;
    let positions = record.positions.as_ref().expect("checked above");
    let n = positions.len() as f64;
    if positions.len() < 2 {
        return Ok(0.0);
    }
    let var = positions
        .iter()
        .map(|p| (p[0] - receiver.position() - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok((var / n).sqrt())
}
