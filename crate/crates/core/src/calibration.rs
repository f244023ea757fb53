//! Estimation of the optimal boundary shift `alpha`.
//!
//! In 1D the normalised absorption index `<x_abs - r_x> / sqrt(D dt)` is
//! linear in `alpha`; its root is the optimum. In 3D the ISDCD against the
//! closed form is quadratic in `alpha` near the optimum; the parabola vertex
//! is the estimate, with the spread over repeats as its uncertainty.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::ChannelGeometry;
use crate::engines::{absorption_index_1d, absorption_index_stderr, run_1d, Receiver1D, RunConfig};
use crate::error::{Error, Result};
use crate::fit::{fit_line, fit_parabola};
use crate::metrics::run_isdcd;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitCoefficients {
    Linear {
        slope: f64,
        intercept: f64,
    },
    /// Mean coefficients over the accepted repeats.
    Parabola {
        a: f64,
        b: f64,
        c: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha_opt: f64,
    pub alpha_stderr: f64,
    pub fit: FitCoefficients,
    pub grid: Vec<f64>,
    pub per_alpha_metric: Vec<f64>,
    /// Standard error of each metric value (across configurations or repeats).
    pub per_alpha_stderr: Vec<f64>,
    /// Repeats that produced a convex fit (1 for linear calibrations).
    pub accepted_repeats: usize,
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// 13 points on `[0, 1.5]`.
pub fn default_alpha_grid_1d() -> Vec<f64> {
    linspace(0.0, 1.5, 13)
}

/// 9 points on `[0.4, 1.2]`.
pub fn default_alpha_grid_3d() -> Vec<f64> {
    linspace(0.4, 1.2, 9)
}

/// Time step of a 1D run whose `n_steps` steps cover six peak times of the
/// first-passage density, i.e. `t_f = (L - r_x)^2 / D`.
pub fn default_dt_1d(receiver: &Receiver1D, n_steps: usize) -> f64 {
    (receiver.source() - receiver.position()).powi(2) / receiver.diffusion() / n_steps as f64
}

/// The 5 x 5 grid of `L` in `[30, 200]` and `D` in `[80, 600]` used to average
/// the 1D calibration curve.
pub fn fig4_receivers() -> Vec<Receiver1D> {
    let mut out = Vec::with_capacity(25);
    for l in linspace(30.0, 200.0, 5) {
        for d in linspace(80.0, 600.0, 5) {
            out.push(Receiver1D::at_origin(l, d).expect("valid grid"));
        }
    }
    out
}

/// Line fit of `metric` against `grid`; the root is the calibrated alpha.
pub fn linear_calibration(
    grid: &[f64],
    metric: &[f64],
    stderr: &[f64],
) -> Result<CalibrationResult> {
    if grid.len() < 3 {
        return Err(Error::Calibration(format!(
            "need at least 3 valid grid points, got {}",
            grid.len()
        )));
    }
    let line = fit_line(grid, metric)?;
    if line.slope == 0.0 {
        return Err(Error::Calibration(
            "flat calibration line has no root".into(),
        ));
    }
    Ok(CalibrationResult {
        alpha_opt: line.root(),
        alpha_stderr: line.root_stderr(),
        fit: FitCoefficients::Linear {
            slope: line.slope,
            intercept: line.intercept,
        },
        grid: grid.to_vec(),
        per_alpha_metric: metric.to_vec(),
        per_alpha_stderr: stderr.to_vec(),
        accepted_repeats: 1,
    })
}

/// Normalised absorption index and its standard error for one 1D run, or
/// `None` when nothing was absorbed.
fn normalised_index(config: &RunConfig<Receiver1D>) -> Result<Option<(f64, f64)>> {
    let record = run_1d(config)?;
    let scale = (config.geometry.diffusion() * config.dt).sqrt();
    match absorption_index_1d(&record, &config.geometry) {
        Ok(ai) => Ok(Some((
            ai / scale,
            absorption_index_stderr(&record, &config.geometry)? / scale,
        ))),
        Err(Error::UndefinedStatistic(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn calibrate_1d(
    receiver: &Receiver1D,
    dt: f64,
    n_steps: usize,
    n_particles: usize,
    alpha_grid: &[f64],
    seed: u64,
) -> Result<CalibrationResult> {
    let points: Vec<Option<(f64, f64)>> = alpha_grid
        .par_iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let config = RunConfig::new_1d(
                *receiver,
                dt,
                n_steps,
                n_particles,
                alpha,
                derive_seed(seed, &[j as u64]),
            );
            normalised_index(&config)
        })
        .collect::<Result<_>>()?;

    let (mut grid, mut metric, mut stderr) = (Vec::new(), Vec::new(), Vec::new());
    for (&alpha, point) in alpha_grid.iter().zip(points) {
        match point {
            Some((m, s)) => {
                grid.push(alpha);
                metric.push(m);
                stderr.push(s);
            }
            None => warn!("no particles absorbed at alpha = {alpha}; grid point dropped"),
        }
    }
    linear_calibration(&grid, &metric, &stderr)
}

/// 1D calibration with the normalised index averaged over several
/// receivers, each run with its own time step.
pub fn calibrate_1d_averaged(
    setups: &[(Receiver1D, f64)],
    n_steps: usize,
    n_particles: usize,
    alpha_grid: &[f64],
    seed: u64,
) -> Result<CalibrationResult> {
    if setups.is_empty() {
        return Err(Error::Config("no receiver configurations given".into()));
    }
    let cells: Vec<(usize, usize)> = (0..alpha_grid.len())
        .flat_map(|j| (0..setups.len()).map(move |k| (j, k)))
        .collect();
    let values: Vec<Option<(f64, f64)>> = cells
        .par_iter()
        .map(|&(j, k)| {
            let (receiver, dt) = setups[k];
            let config = RunConfig::new_1d(
                receiver,
                dt,
                n_steps,
                n_particles,
                alpha_grid[j],
                derive_seed(seed, &[k as u64, j as u64]),
            );
            normalised_index(&config)
        })
        .collect::<Result<_>>()?;

    let (mut grid, mut metric, mut stderr) = (Vec::new(), Vec::new(), Vec::new());
    for (j, &alpha) in alpha_grid.iter().enumerate() {
        let row = &values[j * setups.len()..(j + 1) * setups.len()];
        let valid: Vec<(f64, f64)> = row.iter().flatten().copied().collect();
        if valid.len() < row.len() {
            warn!(
                "alpha = {alpha}: {} configuration(s) absorbed nothing",
                row.len() - valid.len()
            );
        }
        if valid.is_empty() {
            continue;
        }
        let n = valid.len() as f64;
        let mean = valid.iter().map(|v| v.0).sum::<f64>() / n;
        // Standard error of an average of independent estimates.
        let se = valid.iter().map(|v| v.1 * v.1).sum::<f64>().sqrt() / n;
        grid.push(alpha);
        metric.push(mean);
        stderr.push(se);
    }
    linear_calibration(&grid, &metric, &stderr)
}

/// Parabola-vertex calibration from ISDCD values per repeat
/// (`per_repeat[r][j]` belongs to `grid[j]`).
pub fn parabola_calibration(grid: &[f64], per_repeat: &[Vec<f64>]) -> Result<CalibrationResult> {
    let mut vertices = Vec::new();
    let mut coeffs = (0.0, 0.0, 0.0);
    for (r, values) in per_repeat.iter().enumerate() {
        let fit = fit_parabola(grid, values)?;
        if fit.is_convex() {
            vertices.push(fit.vertex());
            coeffs.0 += fit.a;
            coeffs.1 += fit.b;
            coeffs.2 += fit.c;
        } else {
            warn!("repeat {r}: non-convex ISDCD fit (a = {}) discarded", fit.a);
        }
    }
    let kept = vertices.len();
    if kept == 0 || 2 * (per_repeat.len() - kept) > per_repeat.len() {
        return Err(Error::Calibration(format!(
            "only {kept} of {} repeats gave a convex fit",
            per_repeat.len()
        )));
    }
    let n = kept as f64;
    let alpha_opt = vertices.iter().sum::<f64>() / n;
    let alpha_stderr = if kept > 1 {
        (vertices
            .iter()
            .map(|v| (v - alpha_opt).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };

    let reps = per_repeat.len() as f64;
    let (mut metric, mut stderr) = (Vec::new(), Vec::new());
    for j in 0..grid.len() {
        let column = per_repeat.iter().map(|v| v[j]);
        let mean = column.clone().sum::<f64>() / reps;
        let var = if per_repeat.len() > 1 {
            column.map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1.0)
        } else {
            0.0
        };
        metric.push(mean);
        stderr.push((var / reps).sqrt());
    }
    Ok(CalibrationResult {
        alpha_opt,
        alpha_stderr,
        fit: FitCoefficients::Parabola {
            a: coeffs.0 / n,
            b: coeffs.1 / n,
            c: coeffs.2 / n,
        },
        grid: grid.to_vec(),
        per_alpha_metric: metric,
        per_alpha_stderr: stderr,
        accepted_repeats: kept,
    })
}

pub fn calibrate_3d(
    geom: &ChannelGeometry,
    dt: f64,
    n_steps: usize,
    n_particles: usize,
    alpha_grid: &[f64],
    n_repeats: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    if n_repeats == 0 {
        return Err(Error::Config("at least one repeat is required".into()));
    }
    let cells: Vec<(usize, usize)> = (0..n_repeats)
        .flat_map(|r| (0..alpha_grid.len()).map(move |j| (r, j)))
        .collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(r, j)| {
            run_isdcd(&RunConfig::new_3d(
                *geom,
                dt,
                n_steps,
                n_particles,
                alpha_grid[j],
                derive_seed(seed, &[r as u64, j as u64]),
            ))
        })
        .collect::<Result<_>>()?;
    let per_repeat: Vec<Vec<f64>> = values
        .chunks(alpha_grid.len())
        .map(|c| c.to_vec())
        .collect();
    parabola_calibration(alpha_grid, &per_repeat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        let g1 = default_alpha_grid_1d();
        assert_eq!(g1.len(), 13);
        assert_eq!(g1[0], 0.0);
        assert!((g1[12] - 1.5).abs() < 1e-15);
        let g3 = default_alpha_grid_3d();
        assert_eq!(g3.len(), 9);
        assert!((g3[8] - 1.2).abs() < 1e-15);
        assert_eq!(fig4_receivers().len(), 25);
    }

    #[test]
    fn synthetic_linear_root() {
        let grid = default_alpha_grid_1d();
        let metric: Vec<f64> = grid.iter().map(|a| a - 0.5).collect();
        let res = linear_calibration(&grid, &metric, &vec![0.0; grid.len()]).unwrap();
        assert!((res.alpha_opt - 0.5).abs() < 1e-12);
        assert!(matches!(res.fit, FitCoefficients::Linear { .. }));
        assert!(linear_calibration(&grid[..2], &metric[..2], &[0.0; 2]).is_err());
    }

    #[test]
    fn synthetic_parabola_vertex() {
        let grid = default_alpha_grid_3d();
        let values: Vec<f64> = grid.iter().map(|a| (a - 0.8).powi(2) + 0.1).collect();
        let res = parabola_calibration(&grid, &[values.clone(), values]).unwrap();
        assert!((res.alpha_opt - 0.8).abs() < 1e-12);
        assert_eq!(res.alpha_stderr, 0.0);
        assert_eq!(res.accepted_repeats, 2);
    }

    #[test]
    fn parabola_repeat_spread_gives_stderr() {
        let grid = default_alpha_grid_3d();
        let reps: Vec<Vec<f64>> = [0.78, 0.82]
            .iter()
            .map(|c| grid.iter().map(|a| (a - c).powi(2)).collect())
            .collect();
        let res = parabola_calibration(&grid, &reps).unwrap();
        assert!((res.alpha_opt - 0.8).abs() < 1e-12);
        assert!(res.alpha_stderr > 0.0);
    }

    #[test]
    fn concave_majority_is_an_error() {
        let grid = default_alpha_grid_3d();
        let convex: Vec<f64> = grid.iter().map(|a| (a - 0.8).powi(2)).collect();
        let concave: Vec<f64> = grid.iter().map(|a| -(a - 0.8).powi(2)).collect();
        let err = parabola_calibration(&grid, &[convex.clone(), concave.clone(), concave.clone()]);
        assert!(matches!(err, Err(Error::Calibration(_))));
        // One discarded out of three is tolerated.
        let ok = parabola_calibration(&grid, &[convex.clone(), convex, concave]).unwrap();
        assert_eq!(ok.accepted_repeats, 2);
    }

    #[test]
    fn unabsorbed_grid_points_are_dropped() {
        // Two steps with a tiny diffusion coefficient: nothing reaches the receiver.
        let r = Receiver1D::at_origin(30.0, 1e-6).unwrap();
        let err = calibrate_1d(&r, 0.1, 2, 100, &[0.0, 0.5, 1.0], 1).unwrap_err();
        assert!(matches!(err, Error::Calibration(_)));
    }

    #[test]
    fn single_configuration_1d_calibration() {
        let r = Receiver1D::at_origin(100.0, 300.0).unwrap();
        let dt = default_dt_1d(&r, 100);
        let res = calibrate_1d(&r, dt, 100, 100_000, &default_alpha_grid_1d(), 8).unwrap();
        assert!(
            (0.80..=0.85).contains(&res.alpha_opt),
            "alpha {}",
            res.alpha_opt
        );
        let analytic = crate::analytic::alpha_analytic_1d().unwrap();
        assert!((res.alpha_opt - analytic).abs() / analytic < 0.08);
    }

    #[test]
    fn shift_invariant_under_matched_rescaling() {
        // D -> 4D with dt -> dt/4 keeps sqrt(D dt) and the whole walk unchanged
        // in distribution.
        let grid = default_alpha_grid_1d();
        let r1 = Receiver1D::at_origin(60.0, 100.0).unwrap();
        let r4 = Receiver1D::at_origin(60.0, 400.0).unwrap();
        let dt = default_dt_1d(&r1, 100);
        let a = calibrate_1d(&r1, dt, 100, 50_000, &grid, 21).unwrap();
        let b = calibrate_1d(&r4, dt / 4.0, 100, 50_000, &grid, 22).unwrap();
        let joint = (a.alpha_stderr.powi(2) + b.alpha_stderr.powi(2)).sqrt();
        assert!(
            (a.alpha_opt - b.alpha_opt).abs() < 2.0 * joint,
            "{} vs {} (joint stderr {joint})",
            a.alpha_opt,
            b.alpha_opt
        );
    }

    #[test]
    fn isdcd_vertex_near_point_eight() {
        let g = ChannelGeometry::new(10.0, 35.0, 80.0).unwrap();
        let dt = 6.0 * g.peak_time() / 100.0;
        let res = calibrate_3d(&g, dt, 100, 50_000, &default_alpha_grid_3d(), 3, 5).unwrap();
        assert!(
            (0.75..=0.90).contains(&res.alpha_opt),
            "alpha {}",
            res.alpha_opt
        );
        assert!(res.alpha_stderr > 0.0);
        if let FitCoefficients::Parabola { a, .. } = res.fit {
            assert!(a > 0.0);
        } else {
            panic!("expected parabola");
        }
    }
}
