//! Closed-form channel response of a spherical absorbing receiver in
//! unbounded 3D space, obtained by the method of images on the radial
//! line extended to negative values (a sink mirrored at `r = 2R - L`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Result};
use crate::quad;

/// Receiver radius `R`, transmitter distance `L` from the receiver centre and
/// diffusion coefficient `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    radius: f64,
    distance: f64,
    diffusion: f64,
}

impl ChannelGeometry {
    pub fn new(radius: f64, distance: f64, diffusion: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(domain(format!(
                "receiver radius must be positive, got {radius}"
            )));
        }
        if !(distance > radius && distance.is_finite()) {
            return Err(domain(format!(
                "transmitter distance {distance} must exceed receiver radius {radius}"
            )));
        }
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(domain(format!(
                "diffusion coefficient must be positive, got {diffusion}"
            )));
        }
        Ok(Self {
            radius,
            distance,
            diffusion,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    /// Distance from the transmitter to the receiver surface, `L - R`.
    pub fn gap(&self) -> f64 {
        self.distance - self.radius
    }

    /// Fraction of particles absorbed as `t -> infinity`, `R / L`.
    pub fn asymptote(&self) -> f64 {
        self.radius / self.distance
    }

    /// Time at which the hitting rate peaks, `(L - R)^2 / (6 D)`.
    pub fn peak_time(&self) -> f64 {
        self.gap().powi(2) / (6.0 * self.diffusion)
    }

    /// Particle flux through the receiver surface per released particle.
    /// Defined as 0 at `t = 0`.
    pub fn hit_rate(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let gap = self.gap();
        let four_dt = 4.0 * self.diffusion * t;
        Ok(self.asymptote() * gap / (t * (PI * four_dt).sqrt()) * (-gap * gap / four_dt).exp())
    }

    /// Fraction of particles absorbed by time `t`,
    /// `(R / L) erfc((L - R) / sqrt(4 D t))`.
    pub fn cumulative_absorbed(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(self.asymptote() * erfc(self.gap() / (4.0 * self.diffusion * t).sqrt()))
    }

    /// Probability density of a free particle at radius `r >= R`.
    pub fn pdf(&self, r: f64, t: f64) -> Result<f64> {
        if !(r >= self.radius) {
            return Err(domain(format!(
                "radius {r} lies inside the receiver (R = {})",
                self.radius
            )));
        }
        if !(t > 0.0) {
            return Err(domain(format!("time must be positive, got {t}")));
        }
        Ok(self.pseudo_real_density(r, t))
    }

    /// Source-plus-image density on the whole pseudo-real line `r > 0`,
    /// including `r < R` where it has no physical meaning.
    pub fn pseudo_real_density(&self, r: f64, t: f64) -> f64 {
        let four_dt = 4.0 * self.diffusion * t;
        let source = (-(r - self.distance).powi(2) / four_dt).exp();
        let image = (-(r + self.distance - 2.0 * self.radius).powi(2) / four_dt).exp();
        (source - image) / (4.0 * PI * r * self.distance * (PI * four_dt).sqrt())
    }

    /// Evaluates the response on the grid `t_i = (i + 1) dt`, `i < n_steps`.
    pub fn discretize(&self, dt: f64, n_steps: usize) -> Result<AnalyticCurve> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain(format!("time step must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(domain("at least one time step is required"));
        }
        let mut curve = AnalyticCurve {
            times: Vec::with_capacity(n_steps),
            hit_rate: Vec::with_capacity(n_steps),
            cumulative: Vec::with_capacity(n_steps),
            per_step_fraction: Vec::with_capacity(n_steps),
        };
        let mut previous = 0.0;
        for i in 0..n_steps {
            let t = (i + 1) as f64 * dt;
            let cumulative = self.cumulative_absorbed(t)?;
            curve.times.push(t);
            curve.hit_rate.push(self.hit_rate(t)?);
            curve.cumulative.push(cumulative);
            curve.per_step_fraction.push(cumulative - previous);
            previous = cumulative;
        }
        Ok(curve)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("time must be non-negative, got {t}")))
    }
}

/// Closed-form response sampled at the end of each simulation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCurve {
    pub times: Vec<f64>,
    pub hit_rate: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Fraction absorbed during each step, `N(t_i) - N(t_i - dt)`.
    pub per_step_fraction: Vec<f64>,
}

impl AnalyticCurve {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Expected absorbed count per step for `n_particles` released particles.
    pub fn expected_counts(&self, n_particles: usize) -> Vec<f64> {
        self.per_step_fraction
            .iter()
            .map(|f| f * n_particles as f64)
            .collect()
    }
}

// erfc(8) < 1e-28, so truncating the half-line integrals at 8 is exact in f64.
const ERFC_CUTOFF: f64 = 8.0;

/// `int_0^inf erfc(x) dx`, equal to `1 / sqrt(pi)`.
pub fn erfc_integral() -> Result<f64> {
    quad::integrate(erfc, 0.0, ERFC_CUTOFF, 1e-15, 1e-13)
}

/// `int_0^inf x erfc(x) dx`, equal to `1 / 4`.
pub fn x_erfc_integral() -> Result<f64> {
    quad::integrate(|x| x * erfc(x), 0.0, ERFC_CUTOFF, 1e-15, 1e-13)
}

/// Analytic estimate of the 1D boundary shift obtained by assuming a uniform
/// particle density next to the receiver. Returns `alpha` in units of
/// `sqrt(D dt)`; the closed form is `sqrt(pi) / 2`.
pub fn alpha_analytic_1d() -> Result<f64> {
    // The derivation measures lengths in units of sqrt(4 D dt) = 2 sqrt(D dt).
    let shift = (0.5 - x_erfc_integral()?) / erfc_integral()?;
    Ok(2.0 * shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> ChannelGeometry {
        ChannelGeometry::new(10.0, 30.0, 80.0).unwrap()
    }

    #[test]
    fn geometry_validation() {
        assert!(ChannelGeometry::new(10.0, 10.0, 80.0).is_err());
        assert!(ChannelGeometry::new(0.0, 10.0, 80.0).is_err());
        assert!(ChannelGeometry::new(10.0, 30.0, 0.0).is_err());
        assert!(ChannelGeometry::new(10.0, 30.0, 80.0).is_ok());
    }

    #[test]
    fn hit_rate_peaks_at_analytic_time() {
        let g = geom();
        assert!((g.peak_time() - 5.0 / 6.0).abs() < 1e-15);
        // Dense scan oracle.
        let (t_best, _) = (1..200_000)
            .map(|i| i as f64 * 1e-5)
            .map(|t| (t, g.hit_rate(t).unwrap()))
            .fold((0.0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((t_best - 5.0 / 6.0).abs() < 2e-5, "scan peak at {t_best}");
    }

    #[test]
    fn hit_rate_limits() {
        let g = geom();
        assert_eq!(g.hit_rate(0.0).unwrap(), 0.0);
        assert!(g.hit_rate(1e-4).unwrap() < 1e-100);
        assert!(g.hit_rate(1e12).unwrap() < 1e-15);
        assert!(g.hit_rate(-1.0).is_err());
    }

    #[test]
    fn cumulative_limits() {
        let g = geom();
        assert_eq!(g.cumulative_absorbed(0.0).unwrap(), 0.0);
        assert!((g.cumulative_absorbed(1e300).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(g.cumulative_absorbed(-1.0).is_err());
    }

    #[test]
    fn quadrature_of_hit_rate_matches_cumulative() {
        let g = geom();
        let q = quad::integrate(|t| g.hit_rate(t).unwrap(), 0.0, 100.0, 1e-14, 1e-12).unwrap();
        let c = g.cumulative_absorbed(100.0).unwrap();
        assert!((q - c).abs() / c < 1e-6, "{q} vs {c}");
    }

    #[test]
    fn hit_rate_is_time_derivative_of_cumulative() {
        let g = geom();
        for t in [0.2, 0.5, 1.0, 3.0, 20.0] {
            let h = 1e-5 * t;
            let fd = (g.cumulative_absorbed(t + h).unwrap()
                - g.cumulative_absorbed(t - h).unwrap())
                / (2.0 * h);
            let exact = g.hit_rate(t).unwrap();
            assert!((fd - exact).abs() / exact < 1e-4, "t={t}: {fd} vs {exact}");
        }
    }

    #[test]
    fn density_vanishes_on_receiver() {
        let g = geom();
        for t in [0.01, 1.0, 100.0] {
            assert!(g.pdf(10.0, t).unwrap().abs() < 1e-18);
        }
        assert!(g.pdf(9.99, 1.0).is_err());
        assert!(g.pdf(20.0, 0.0).is_err());
    }

    #[test]
    fn flux_of_density_matches_hit_rate() {
        let g = geom();
        let (r, t, h) = (10.0, 1.0, 1e-3);
        let grad = (g.pseudo_real_density(r + h, t) - g.pseudo_real_density(r - h, t)) / (2.0 * h);
        let flux = 4.0 * PI * r * r * g.diffusion() * grad;
        let exact = g.hit_rate(t).unwrap();
        assert!((flux - exact).abs() / exact < 1e-4, "{flux} vs {exact}");
    }

    #[test]
    fn probability_is_conserved() {
        let g = geom();
        let t = 1.0;
        let upper = g.distance() + 40.0 * (4.0 * g.diffusion() * t).sqrt();
        let survival = quad::integrate(
            |r| g.pdf(r, t).unwrap() * 4.0 * PI * r * r,
            g.radius(),
            upper,
            1e-15,
            1e-12,
        )
        .unwrap();
        let total = survival + g.cumulative_absorbed(t).unwrap();
        assert!((total - 1.0).abs() < 1e-5, "total {total}");
    }

    #[test]
    fn analytic_alpha_matches_closed_form() {
        let sqrt_pi = PI.sqrt();
        assert!((erfc_integral().unwrap() - 1.0 / sqrt_pi).abs() < 1e-8);
        assert!((x_erfc_integral().unwrap() - 0.25).abs() < 1e-8);
        assert!((alpha_analytic_1d().unwrap() - sqrt_pi / 2.0).abs() < 1e-6);
    }

    #[test]
    fn discretization_telescopes() {
        let g = geom();
        let curve = g.discretize(0.02, 300).unwrap();
        assert_eq!(curve.len(), 300);
        let sum: f64 = curve.per_step_fraction.iter().sum();
        let end = g.cumulative_absorbed(6.0).unwrap();
        assert!((sum - end).abs() < 1e-14);
        assert!(curve.per_step_fraction.iter().all(|&f| f >= 0.0));
        assert!(curve.cumulative.windows(2).all(|w| w[0] <= w[1]));
        assert!(curve.cumulative.iter().all(|&c| c <= g.asymptote()));

        let single = g.discretize(0.5, 1).unwrap();
        assert_eq!(
            single.per_step_fraction[0],
            g.cumulative_absorbed(0.5).unwrap()
        );
        assert!(g.discretize(0.0, 10).is_err());
        assert!(g.discretize(0.1, 0).is_err());
    }
}
