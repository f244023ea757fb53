//! Ordinary least-squares line and parabola fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub var_slope: f64,
    pub var_intercept: f64,
    pub cov: f64,
}

impl LinearFit {
    /// Abscissa where the line crosses zero, `-intercept / slope`.
    pub fn root(&self) -> f64 {
        -self.intercept / self.slope
    }

    /// Standard error of [`root`](Self::root) by first-order propagation of
    /// the coefficient covariance.
    pub fn root_stderr(&self) -> f64 {
        let x0 = self.root();
        let var = (self.var_intercept + x0 * x0 * self.var_slope + 2.0 * x0 * self.cov)
            / (self.slope * self.slope);
        var.max(0.0).sqrt()
    }
}

fn check_input(x: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < min_points {
        return Err(Error::Calibration(format!(
            "need at least {min_points} points, got {}",
            x.len()
        )));
    }
    Ok(())
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    check_input(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Calibration("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let dof = x.len().saturating_sub(2);
    let s2 = if dof > 0 {
        x.iter()
            .zip(y)
            .map(|(xi, yi)| (yi - intercept - slope * xi).powi(2))
            .sum::<f64>()
            / dof as f64
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        var_slope: s2 / sxx,
        var_intercept: s2 * (1.0 / n + mx * mx / sxx),
        cov: -s2 * mx / sxx,
    })
}

/// `y = a x^2 + b x + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ParabolaFit {
    pub fn is_convex(&self) -> bool {
        self.a > 0.0
    }

    pub fn vertex(&self) -> f64 {
        -self.b / (2.0 * self.a)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

pub fn fit_parabola(x: &[f64], y: &[f64]) -> Result<ParabolaFit> {
    check_input(x, y, 3)?;
    // Work in centred, scaled coordinates u = (x - m) / s for conditioning.
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let s = x.iter().map(|xi| (xi - m).abs()).fold(0.0, f64::max);
    if s == 0.0 {
        return Err(Error::Calibration("abscissae are all equal".into()));
    }
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for (xi, yi) in x.iter().zip(y) {
        let u = (xi - m) / s;
        let row = [1.0, u, u * u];
        for i in 0..3 {
            aty[i] += row[i] * yi;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let [p0, p1, p2] = solve3(ata, aty)
        .ok_or_else(|| Error::Calibration("fewer than 3 distinct abscissae".into()))?;
    // y = p0 + p1 u + p2 u^2 with u = (x - m) / s.
    let a = p2 / (s * s);
    let b = p1 / s - 2.0 * p2 * m / (s * s);
    let c = p0 - p1 * m / s + p2 * m * m / (s * s);
    Ok(ParabolaFit { a, b, c })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Inverse-variance weighted mean and its standard error.
pub fn weighted_mean(values: &[f64], stderrs: &[f64]) -> Result<(f64, f64)> {
    check_input(values, stderrs, 1)?;
    if stderrs.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::UndefinedStatistic(
            "weighted mean needs positive standard errors".into(),
        ));
    }
    let weights: Vec<f64> = stderrs.iter().map(|s| 1.0 / (s * s)).collect();
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / total;
    Ok((mean, total.recip().sqrt()))
}
