use log::info;
use rayon::prelude::*;

use super::config::{ExperimentKind, ExperimentSpec, Figure, Params};
use super::output::Artifact;
use super::HarnessError;
use crate::analytic::{alpha_analytic_1d, ChannelGeometry};
use crate::calibration::{
    calibrate_1d, calibrate_1d_averaged, calibrate_3d, default_dt_1d, fig4_receivers, linspace,
    CalibrationResult, FitCoefficients,
};
use crate::engines::{absorption_index_1d, run_1d, run_3d, Receiver1D, RunConfig};
use crate::error::Error;
use crate::fit::weighted_mean;
use crate::metrics::{
    chi2_red, default_steps, isdcd, locality_check, poisson_noise_profile, relative_inaccuracy,
    NoiseProfile,
};
use crate::rng::derive_seed;
use crate::{DEFAULT_ALPHA, DEFAULT_PARTICLES};

type Result<T> = std::result::Result<T, HarnessError>;

/// Step-length ratios `sqrt(2 D dt) / (L - R)` probed by the fig9 sweep. EG-MC
/// needs `ratio < sqrt(2) / alpha` (about 1.717) to keep the transmitter
/// outside the effective receiver.
pub const FIG9_RATIOS: [f64; 9] = [0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.6, 1.7];

/// `(R, L, D)` cases of the step-size sweep.
pub fn fig9_cases() -> Vec<ChannelGeometry> {
    [
        (10.0, 30.0, 80.0),
        (10.0, 35.0, 80.0),
        (5.0, 20.0, 200.0),
        (15.0, 50.0, 600.0),
    ]
    .into_iter()
    .map(|(r, l, d)| ChannelGeometry::new(r, l, d).expect("valid case"))
    .collect()
}

/// `(geometry, iterations)` settings of the per-configuration calibration.
pub fn fig8_settings() -> Vec<(ChannelGeometry, usize)> {
    [
        (10.0, 35.0, 80.0, 100),
        (10.0, 30.0, 80.0, 300),
        (5.0, 30.0, 200.0, 100),
        (15.0, 50.0, 600.0, 300),
        (10.0, 50.0, 200.0, 1000),
        (5.0, 35.0, 600.0, 300),
    ]
    .into_iter()
    .map(|(r, l, d, n)| (ChannelGeometry::new(r, l, d).expect("valid setting"), n))
    .collect()
}

/// Runs an experiment and returns its artifact without touching the
/// filesystem.
pub fn execute(spec: &ExperimentSpec) -> Result<Artifact> {
    let mut resolved = spec.clone();
    let mut artifact = match spec.kind {
        ExperimentKind::Run1d => run1d(&mut resolved.params)?,
        ExperimentKind::Run3d => run3d(&mut resolved.params)?,
        ExperimentKind::Calibrate1d => calibrate1d(&mut resolved.params)?,
        ExperimentKind::Calibrate3d => calibrate3d(&mut resolved.params)?,
        ExperimentKind::NoiseProfile => noise(&mut resolved.params)?,
        ExperimentKind::InaccuracySweep => inaccuracy(&mut resolved.params)?,
        ExperimentKind::FigureRepro => {
            let figure = Params::require(spec.figure, "figure")?;
            repro(figure, &mut resolved.params)?
        }
    };
    artifact.config = resolved
        .to_entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(artifact)
}

fn geometry(p: &Params) -> Result<ChannelGeometry> {
    Ok(ChannelGeometry::new(
        Params::require(p.radius, "R_um")?,
        Params::require(p.distance, "L_um")?,
        Params::require(p.diffusion, "D_um2_per_s")?,
    )?)
}

fn receiver(p: &mut Params) -> Result<Receiver1D> {
    let position = *p.receiver_position.get_or_insert(0.0);
    Ok(Receiver1D::new(
        position,
        Params::require(p.distance, "L_um")?,
        Params::require(p.diffusion, "D_um2_per_s")?,
    )?)
}

fn alpha(p: &mut Params) -> f64 {
    *p.alpha.get_or_insert_with(|| {
        info!("alpha not set; using {DEFAULT_ALPHA}");
        DEFAULT_ALPHA
    })
}

fn seed(p: &mut Params) -> u64 {
    *p.seed.get_or_insert(0)
}

fn particles(p: &mut Params) -> usize {
    *p.n_particles.get_or_insert(DEFAULT_PARTICLES)
}

fn repeats(p: &mut Params, default: usize) -> usize {
    *p.n_repeats.get_or_insert(default)
}

fn positive(value: f64, key: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(HarnessError::Invalid(format!(
            "{key} must be positive, got {value}"
        )))
    }
}

fn alpha_grid(p: &mut Params, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    let lo = *p.alpha_min.get_or_insert(lo);
    let hi = *p.alpha_max.get_or_insert(hi);
    let n = *p.alpha_points.get_or_insert(n);
    if n == 0 {
        return Err(HarnessError::Invalid("alpha sweep is empty".into()));
    }
    if n < 3 {
        return Err(HarnessError::Invalid(format!(
            "alpha sweep needs at least 3 points, got {n}"
        )));
    }
    if !(lo < hi) || lo < 0.0 {
        return Err(HarnessError::Invalid(format!(
            "alpha sweep must increase from a non-negative start, got [{lo}, {hi}]"
        )));
    }
    Ok(linspace(lo, hi, n))
}

fn dt_grid(p: &Params) -> Result<Vec<f64>> {
    let lo = positive(Params::require(p.dt_min, "dt_min_s")?, "dt_min_s")?;
    let hi = positive(Params::require(p.dt_max, "dt_max_s")?, "dt_max_s")?;
    let n = Params::require(p.dt_points, "dt_points")?;
    if n == 0 {
        return Err(HarnessError::Invalid("time-step sweep is empty".into()));
    }
    if n > 1 && !(lo < hi) {
        return Err(HarnessError::Invalid(format!(
            "time-step sweep must increase, got [{lo}, {hi}]"
        )));
    }
    Ok(linspace(lo.ln(), hi.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect())
}

fn summarise_fit(artifact: &mut Artifact, cal: &CalibrationResult) {
    artifact.add_summary("alpha_opt", cal.alpha_opt);
    artifact.add_summary("alpha_stderr", cal.alpha_stderr);
    match cal.fit {
        FitCoefficients::Linear { slope, intercept } => {
            artifact.add_summary("slope", slope);
            artifact.add_summary("intercept", intercept);
        }
        FitCoefficients::Parabola { a, b, c } => {
            artifact.add_summary("a", a);
            artifact.add_summary("b", b);
            artifact.add_summary("c", c);
            artifact.add_summary("accepted_repeats", cal.accepted_repeats);
        }
    }
}

fn calibration_table(cal: &CalibrationResult, metric: &'static str) -> Artifact {
    let mut artifact = Artifact::new(&["alpha", metric, "stderr"]);
    for ((a, m), s) in cal
        .grid
        .iter()
        .zip(&cal.per_alpha_metric)
        .zip(&cal.per_alpha_stderr)
    {
        artifact.push_row(vec![(*a).into(), (*m).into(), (*s).into()]);
    }
    summarise_fit(&mut artifact, cal);
    artifact
}

fn run1d(p: &mut Params) -> Result<Artifact> {
    let receiver = receiver(p)?;
    let dt = positive(Params::require(p.dt, "dt_s")?, "dt_s")?;
    let n_steps = *p.n_steps.get_or_insert(100);
    let config = RunConfig::new_1d(receiver, dt, n_steps, particles(p), alpha(p), seed(p));
    let record = run_1d(&config)?;
    info!(
        "run1d absorbed {} of {}",
        record.total_absorbed(),
        config.n_particles
    );

    let mut artifact = Artifact::new(&["step", "t_s", "absorbed", "cumulative_fraction"]);
    let cumulative = record.cumulative_fraction(config.n_particles);
    for (i, (c, f)) in record.counts.iter().zip(cumulative).enumerate() {
        artifact.push_row(vec![
            i.into(),
            ((i + 1) as f64 * dt).into(),
            (*c).into(),
            f.into(),
        ]);
    }
    artifact.add_summary("absorbed", record.total_absorbed());
    artifact.add_summary("survivors", record.survivors);
    match absorption_index_1d(&record, &receiver) {
        Ok(ai) => {
            artifact.add_summary("absorption_index_um", ai);
            artifact.add_summary(
                "absorption_index_over_sqrt_Ddt",
                ai / (receiver.diffusion() * dt).sqrt(),
            );
        }
        Err(Error::UndefinedStatistic(_)) => {
            artifact.add_summary("absorption_index_um", "undefined")
        }
        Err(e) => return Err(e.into()),
    }
    Ok(artifact)
}

fn run3d(p: &mut Params) -> Result<Artifact> {
    let geom = geometry(p)?;
    let dt = positive(Params::require(p.dt, "dt_s")?, "dt_s")?;
    let n_steps = *p.n_steps.get_or_insert_with(|| default_steps(&geom, dt));
    let config = RunConfig::new_3d(geom, dt, n_steps, particles(p), alpha(p), seed(p));
    let record = run_3d(&config)?;
    let curve = geom.discretize(dt, n_steps)?;
    info!(
        "run3d absorbed {} of {}",
        record.total_absorbed(),
        config.n_particles
    );

    let mut artifact = Artifact::new(&[
        "step",
        "t_s",
        "absorbed",
        "sim_cumulative",
        "anl_cumulative",
        "anl_expected_count",
    ]);
    let cumulative = record.cumulative_fraction(config.n_particles);
    let expected = curve.expected_counts(config.n_particles);
    for i in 0..n_steps {
        artifact.push_row(vec![
            i.into(),
            curve.times[i].into(),
            record.counts[i].into(),
            cumulative[i].into(),
            curve.cumulative[i].into(),
            expected[i].into(),
        ]);
    }
    let locality = locality_check(&geom, dt);
    artifact.add_summary("absorbed", record.total_absorbed());
    artifact.add_summary("survivors", record.survivors);
    artifact.add_summary("isdcd", isdcd(&cumulative, &curve.cumulative)?);
    match chi2_red(&record.counts, &curve.per_step_fraction, config.n_particles) {
        Ok(chi) => {
            artifact.add_summary("chi2_red", chi.reduced);
            artifact.add_summary("chi2_dof", chi.dof);
        }
        Err(Error::UndefinedStatistic(_)) => artifact.add_summary("chi2_red", "undefined"),
        Err(e) => return Err(e.into()),
    }
    artifact.add_summary("step_length_um", locality.step_length);
    artifact.add_summary("step_length_ratio", locality.ratio);
    artifact.add_summary("locality_ok", locality.ok);
    Ok(artifact)
}

fn calibrate1d(p: &mut Params) -> Result<Artifact> {
    let receiver = receiver(p)?;
    let n_steps = *p.n_steps.get_or_insert(100);
    let dt = *p
        .dt
        .get_or_insert_with(|| default_dt_1d(&receiver, n_steps));
    let dt = positive(dt, "dt_s")?;
    let grid = alpha_grid(p, 0.0, 1.5, 13)?;
    let cal = calibrate_1d(&receiver, dt, n_steps, particles(p), &grid, seed(p))?;
    let mut artifact = calibration_table(&cal, "mean_x_exp_over_sqrt_Ddt");
    artifact.add_summary("alpha_analytic", alpha_analytic_1d()?);
    Ok(artifact)
}

fn calibrate3d(p: &mut Params) -> Result<Artifact> {
    let geom = geometry(p)?;
    let dt = positive(Params::require(p.dt, "dt_s")?, "dt_s")?;
    let n_steps = *p.n_steps.get_or_insert_with(|| default_steps(&geom, dt));
    let grid = alpha_grid(p, 0.4, 1.2, 9)?;
    let n_repeats = repeats(p, 20);
    let cal = calibrate_3d(&geom, dt, n_steps, particles(p), &grid, n_repeats, seed(p))?;
    Ok(calibration_table(&cal, "mean_isdcd"))
}

fn noise_table(profile: &NoiseProfile, dt: f64) -> Artifact {
    let mut artifact = Artifact::new(&["step", "t_s", "measured_std", "poisson_std", "band"]);
    for i in 0..profile.measured_std.len() {
        artifact.push_row(vec![
            i.into(),
            ((i + 1) as f64 * dt).into(),
            profile.measured_std[i].into(),
            profile.poisson_std[i].into(),
            profile.band[i].into(),
        ]);
    }
    artifact.add_summary("fraction_within_band", profile.fraction_within(1.0));
    artifact.add_summary("fraction_within_2band", profile.fraction_within(2.0));
    artifact
}

fn noise(p: &mut Params) -> Result<Artifact> {
    let geom = geometry(p)?;
    let dt = positive(Params::require(p.dt, "dt_s")?, "dt_s")?;
    let n_steps = *p.n_steps.get_or_insert_with(|| default_steps(&geom, dt));
    let n_repeats = repeats(p, 30);
    if n_repeats < 10 {
        return Err(HarnessError::Invalid(format!(
            "noise profiling needs at least 10 repeats, got {n_repeats}"
        )));
    }
    let config = RunConfig::new_3d(geom, dt, n_steps, particles(p), alpha(p), seed(p));
    let profile = poisson_noise_profile(&config, n_repeats)?;
    Ok(noise_table(&profile, dt))
}

/// Relative inaccuracy, or `None` where the EG-MC boundary would reach the
/// transmitter.
fn inaccuracy_cell(geom: &ChannelGeometry, dt: f64, n: usize, seed: u64) -> Result<Option<f64>> {
    match relative_inaccuracy(geom, dt, n, seed) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Config(msg)) | Err(Error::UndefinedStatistic(msg)) => {
            info!("dt = {dt}: relative inaccuracy undefined ({msg})");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn inaccuracy(p: &mut Params) -> Result<Artifact> {
    let geom = geometry(p)?;
    let dts = dt_grid(p)?;
    let n = particles(p);
    let base = seed(p);
    let values: Vec<Option<f64>> = dts
        .par_iter()
        .enumerate()
        .map(|(i, &dt)| inaccuracy_cell(&geom, dt, n, derive_seed(base, &[i as u64])))
        .collect::<Result<_>>()?;
    let mut artifact = Artifact::new(&["dt_s", "step_length_um", "ratio", "relative_inaccuracy"]);
    for (dt, v) in dts.iter().zip(values) {
        let loc = locality_check(&geom, *dt);
        artifact.push_row(vec![
            (*dt).into(),
            loc.step_length.into(),
            loc.ratio.into(),
            v.into(),
        ]);
    }
    Ok(artifact)
}

fn repro(figure: Figure, p: &mut Params) -> Result<Artifact> {
    let n = particles(p);
    let base = seed(p);
    match figure {
        Figure::Fig4 => {
            let setups: Vec<(Receiver1D, f64)> = fig4_receivers()
                .into_iter()
                .map(|r| (r, default_dt_1d(&r, 100)))
                .collect();
            let grid = alpha_grid(p, 0.0, 1.5, 13)?;
            let cal = calibrate_1d_averaged(&setups, 100, n, &grid, base)?;
            let mut artifact = calibration_table(&cal, "mean_x_exp_over_sqrt_Ddt");
            artifact.add_summary("alpha_analytic", alpha_analytic_1d()?);
            Ok(artifact)
        }
        Figure::Fig5 => fig5(n, base),
        Figure::Fig6 => {
            let geom = ChannelGeometry::new(10.0, 35.0, 80.0)?;
            let dt = 6.0 * geom.peak_time() / 100.0;
            let grid = alpha_grid(p, 0.4, 1.2, 9)?;
            let cal = calibrate_3d(&geom, dt, 100, n, &grid, repeats(p, 20), base)?;
            Ok(calibration_table(&cal, "mean_isdcd"))
        }
        Figure::Fig7 => {
            let geom = ChannelGeometry::new(10.0, 35.0, 80.0)?;
            let dt = 6.0 * geom.peak_time() / 1000.0;
            let config = RunConfig::new_3d(geom, dt, 1000, n, DEFAULT_ALPHA, base);
            let profile = poisson_noise_profile(&config, repeats(p, 30))?;
            Ok(noise_table(&profile, dt))
        }
        Figure::Fig8 => fig8(p, n, base),
        Figure::Fig9 => fig9(n, base),
    }
}

fn fig5(n: usize, base: u64) -> Result<Artifact> {
    let mut artifact = Artifact::new(&[
        "L_um",
        "t_s",
        "anl_hit_rate",
        "egmc_hit_rate",
        "mc_hit_rate",
    ]);
    for (k, l) in [20.0, 30.0, 40.0, 50.0].into_iter().enumerate() {
        let geom = ChannelGeometry::new(10.0, l, 80.0)?;
        let n_steps = 300;
        let dt = 6.0 * geom.peak_time() / n_steps as f64;
        let curve = geom.discretize(dt, n_steps)?;
        let egmc = run_3d(&RunConfig::new_3d(
            geom,
            dt,
            n_steps,
            n,
            DEFAULT_ALPHA,
            derive_seed(base, &[k as u64, 0]),
        ))?;
        let mc = run_3d(&RunConfig::new_3d(
            geom,
            dt,
            n_steps,
            n,
            0.0,
            derive_seed(base, &[k as u64, 1]),
        ))?;
        let rate = |c: u64| c as f64 / (n as f64 * dt);
        for i in 0..n_steps {
            // Per-step rates are averages over the step, so compare with the
            // step-averaged closed form.
            artifact.push_row(vec![
                l.into(),
                curve.times[i].into(),
                (curve.per_step_fraction[i] / dt).into(),
                rate(egmc.counts[i]).into(),
                rate(mc.counts[i]).into(),
            ]);
        }
        artifact.add_summary(
            &format!("isdcd_egmc_L{l}"),
            isdcd(&egmc.cumulative_fraction(n), &curve.cumulative)?,
        );
        artifact.add_summary(
            &format!("isdcd_mc_L{l}"),
            isdcd(&mc.cumulative_fraction(n), &curve.cumulative)?,
        );
    }
    Ok(artifact)
}

fn fig8(p: &mut Params, n: usize, base: u64) -> Result<Artifact> {
    let grid = alpha_grid(p, 0.4, 1.2, 9)?;
    let n_repeats = repeats(p, 20);
    let mut artifact = Artifact::new(&[
        "R_um",
        "L_um",
        "D_um2_per_s",
        "iterations",
        "alpha_opt",
        "alpha_stderr",
        "chi2_red_egmc",
        "chi2_red_mc",
    ]);
    let (mut alphas, mut errs) = (Vec::new(), Vec::new());
    for (k, (geom, n_steps)) in fig8_settings().into_iter().enumerate() {
        let k = k as u64;
        let dt = 6.0 * geom.peak_time() / n_steps as f64;
        let cal = calibrate_3d(
            &geom,
            dt,
            n_steps,
            n,
            &grid,
            n_repeats,
            derive_seed(base, &[k, 0]),
        )?;
        let curve = geom.discretize(dt, n_steps)?;
        let chi = |alpha: f64, tag: u64| -> Result<f64> {
            let cfg = RunConfig::new_3d(geom, dt, n_steps, n, alpha, derive_seed(base, &[k, tag]));
            let record = run_3d(&cfg)?;
            Ok(chi2_red(&record.counts, &curve.per_step_fraction, n)?.reduced)
        };
        artifact.push_row(vec![
            geom.radius().into(),
            geom.distance().into(),
            geom.diffusion().into(),
            n_steps.into(),
            cal.alpha_opt.into(),
            cal.alpha_stderr.into(),
            chi(cal.alpha_opt, 1)?.into(),
            chi(0.0, 2)?.into(),
        ]);
        alphas.push(cal.alpha_opt);
        errs.push(cal.alpha_stderr);
    }
    let (mean, se) = weighted_mean(&alphas, &errs)?;
    artifact.add_summary("weighted_mean_alpha", mean);
    artifact.add_summary("weighted_mean_alpha_stderr", se);
    Ok(artifact)
}

fn fig9(n: usize, base: u64) -> Result<Artifact> {
    let cells: Vec<(usize, ChannelGeometry, f64)> = fig9_cases()
        .into_iter()
        .enumerate()
        .flat_map(|(k, g)| FIG9_RATIOS.iter().map(move |&ratio| (k, g, ratio)))
        .collect();
    let values: Vec<Option<f64>> = cells
        .par_iter()
        .enumerate()
        .map(|(i, (_, g, ratio))| {
            let dt = (ratio * g.gap()).powi(2) / (2.0 * g.diffusion());
            inaccuracy_cell(g, dt, n, derive_seed(base, &[i as u64]))
        })
        .collect::<Result<_>>()?;
    let mut artifact = Artifact::new(&[
        "R_um",
        "L_um",
        "D_um2_per_s",
        "dt_s",
        "step_length_um",
        "ratio",
        "relative_inaccuracy",
    ]);
    for ((_, g, ratio), v) in cells.iter().zip(values) {
        let dt = (ratio * g.gap()).powi(2) / (2.0 * g.diffusion());
        let loc = locality_check(g, dt);
        artifact.push_row(vec![
            g.radius().into(),
            g.distance().into(),
            g.diffusion().into(),
            dt.into(),
            loc.step_length.into(),
            loc.ratio.into(),
            v.into(),
        ]);
    }
    Ok(artifact)
}
