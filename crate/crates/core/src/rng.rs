//! Seeded random streams and the Brownian stepping kernel.
//!
//! Every run is split into fixed-size partitions of the particle ensemble.
//! Each partition draws from its own [`RngStream`], a ChaCha8 generator keyed
//! by `(seed, stream_id)`, so results do not depend on how many threads step
//! the partitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Result};

/// Number of particles per independently seeded partition.
pub const PARTITION_SIZE: usize = 4096;

/// A reproducible random stream identified by a seed and a partition index.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Derives a child seed from a base seed and a path of indices (repeat,
/// grid point, ...). Uses the SplitMix64 finalizer so neighbouring indices
/// give unrelated seeds.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = splitmix(base);
    for &index in path {
        state = splitmix(state ^ splitmix(index.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    state
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Gaussian displacement with per-coordinate variance `2 * D * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepKernel {
    sigma: f64,
}

impl StepKernel {
    pub fn new(diffusion: f64, dt: f64) -> Result<Self> {
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(domain(format!(
                "diffusion coefficient must be positive, got {diffusion}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            sigma: (2.0 * diffusion * dt).sqrt(),
        })
    }

    /// Standard deviation of one coordinate increment, `sqrt(2 D dt)`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn sample<const N: usize>(&self, rng: &mut RngStream) -> [f64; N] {
        std::array::from_fn(|_| self.sigma * rng.standard_normal())
    }
}

/// One Brownian increment: an independent `Normal(0, 2 D dt)` sample per
/// spatial dimension.
pub fn gaussian_increment<const N: usize>(
    rng: &mut RngStream,
    diffusion: f64,
    dt: f64,
) -> Result<[f64; N]> {
    Ok(StepKernel::new(diffusion, dt)?.sample(rng))
}

/// Positions of the particles that are still free.
///
/// Storage is dense; absorbed particles are swap-removed so particle order
/// carries no meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<const N: usize> {
    positions: Vec<[f64; N]>,
}

impl<const N: usize> ParticleEnsemble<N> {
    pub fn new(positions: Vec<[f64; N]>) -> Self {
        Self { positions }
    }

    /// `count` particles all located at `point`.
    pub fn at_point(point: [f64; N], count: usize) -> Self {
        Self {
            positions: vec![point; count],
        }
    }

    pub fn positions(&self) -> &[[f64; N]] {
        &self.positions
    }

    pub fn alive_count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Displaces every particle by an independent Gaussian increment.
    pub fn step(&mut self, rng: &mut RngStream, kernel: &StepKernel) {
        for p in &mut self.positions {
            let dx: [f64; N] = kernel.sample(rng);
            for (x, d) in p.iter_mut().zip(dx) {
                *x += d;
            }
        }
    }

    /// Removes every particle for which `is_absorbed` holds, optionally
    /// appending the removed positions to `sink`. Returns the number removed.
    pub fn absorb<F>(&mut self, is_absorbed: F, mut sink: Option<&mut Vec<[f64; N]>>) -> usize
    where
        F: Fn(&[f64; N]) -> bool,
    {
        let before = self.positions.len();
        let mut i = 0;
        while i < self.positions.len() {
            if is_absorbed(&self.positions[i]) {
                let p = self.positions.swap_remove(i);
                if let Some(sink) = sink.as_deref_mut() {
                    sink.push(p);
                }
            } else {
                i += 1;
            }
        }
        before - self.positions.len()
    }
}

/// Functional form of [`ParticleEnsemble::step`].
pub fn step_ensemble<const N: usize>(
    mut ensemble: ParticleEnsemble<N>,
    rng: &mut RngStream,
    diffusion: f64,
    dt: f64,
) -> Result<ParticleEnsemble<N>> {
    let kernel = StepKernel::new(diffusion, dt)?;
    ensemble.step(rng, &kernel);
    Ok(ensemble)
}

/// Sizes of the partitions an ensemble of `n` particles is split into.
pub fn partition_sizes(n: usize) -> impl Iterator<Item = usize> {
    let full = n / PARTITION_SIZE;
    let rest = n % PARTITION_SIZE;
    std::iter::repeat(PARTITION_SIZE)
        .take(full)
        .chain((rest > 0).then_some(rest))
}
