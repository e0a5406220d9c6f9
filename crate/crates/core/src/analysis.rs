//! Power-law fits and their error bars.
//!
//! Exponents are the raw log-log slopes; callers flip the sign where the
//! physical exponent is defined through a decay (`P_sur ~ t^-delta`).

use num_traits::Float;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qjmc::{mean_series, rng_from_seed, trajectory_seed, TrajectoryObservable, TrajectoryRecord};
use crate::scalar::real_to_f64;

pub const MIN_FIT_POINTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMethod {
    ChiDifference,
    Bootstrap2Sigma,
    Propagated,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub amplitude: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// Root-mean-square residual of the log-log line.
    pub residual_rms: f64,
    pub error: f64,
    pub method: ErrorMethod,
}

impl FitResult {
    /// The same fit with the exponent sign flipped.
    pub fn negated(self) -> Self {
        Self { exponent: -self.exponent, ..self }
    }
}

fn in_window(t: f64, window: (f64, f64)) -> bool {
    let eps = 1e-9 * window.1.abs().max(1.0);
    t >= window.0 - eps && t <= window.1 + eps
}

/// Least-squares line through `(ln t, ln y)` for `t` in the closed window.
pub fn powerlaw_fit<F: Float>(t: &[F], y: &[F], window: (f64, f64)) -> Result<FitResult> {
    if t.len() != y.len() {
        return Err(Error::Fit(format!("{} times but {} values", t.len(), y.len())));
    }
    if !(window.0 < window.1) {
        return Err(Error::Fit(format!("empty window [{}, {}]", window.0, window.1)));
    }
    let t: Vec<f64> = t.iter().map(|&x| real_to_f64(x)).collect();
    let y: Vec<f64> = y.iter().map(|&x| real_to_f64(x)).collect();
    let (t_min, t_max) = t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !in_window(window.0, (t_min, t_max)) || !in_window(window.1, (t_min, t_max)) {
        return Err(Error::Fit(format!(
            "window [{}, {}] outside data range [{t_min}, {t_max}]",
            window.0, window.1
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&ti, &yi) in t.iter().zip(&y) {
        if !in_window(ti, window) {
            continue;
        }
        if !(ti > 0.0) || !(yi > 0.0) {
            return Err(Error::Fit(format!(
                "non-positive data in window [{}, {}]: t = {ti}, y = {yi}",
                window.0, window.1
            )));
        }
        xs.push(ti.ln());
        ys.push(yi.ln());
    }
    let n = xs.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "window [{}, {}] holds {n} points, need {MIN_FIT_POINTS}",
            window.0, window.1
        )));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(FitResult {
        exponent: slope,
        amplitude: intercept.exp(),
        window,
        n_points: n,
        residual_rms: (rss / n as f64).sqrt(),
        error: 0.0,
        method: ErrorMethod::None,
    })
}

/// `fit_hi` with the difference to the half-bond-dimension fit as its error.
pub fn chi_difference_error(fit_hi: &FitResult, fit_half: &FitResult) -> Result<FitResult> {
    if fit_hi.window != fit_half.window {
        return Err(Error::Fit(format!(
            "windows differ: {:?} vs {:?}",
            fit_hi.window, fit_half.window
        )));
    }
    Ok(FitResult {
        error: (fit_hi.exponent - fit_half.exponent).abs(),
        method: ErrorMethod::ChiDifference,
        ..*fit_hi
    })
}

fn observable_columns(records: &[TrajectoryRecord], obs: TrajectoryObservable) -> Vec<Vec<f64>> {
    records.iter().map(|r| obs.values(r)).collect()
}

fn resample_indices(n: usize, seed: u64, draw: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(trajectory_seed(seed, draw));
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn spread(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Fit of the ensemble mean with a bootstrap error: trajectories are
/// resampled with replacement `n_resample` times, each resampled mean is
/// refitted, and the error is twice the standard deviation of the slopes.
pub fn bootstrap_exponent(
    records: &[TrajectoryRecord],
    obs: TrajectoryObservable,
    window: (f64, f64),
    n_resample: usize,
    seed: u64,
) -> Result<FitResult> {
    let first = records
        .first()
        .ok_or_else(|| Error::Fit("no trajectories to resample".into()))?;
    let times = &first.times;
    let cols = observable_columns(records, obs);
    let base = powerlaw_fit(times, &mean_series(&cols).mean, window)?;
    let slopes: Vec<f64> = (0..n_resample as u64)
        .into_par_iter()
        .map(|draw| {
            let pick: Vec<Vec<f64>> = resample_indices(cols.len(), seed, draw)
                .into_iter()
                .map(|i| cols[i].clone())
                .collect();
            powerlaw_fit(times, &mean_series(&pick).mean, window).map(|f| f.exponent)
        })
        .collect::<Result<_>>()?;
    Ok(FitResult {
        error: 2.0 * spread(&slopes),
        method: ErrorMethod::Bootstrap2Sigma,
        ..base
    })
}

/// `z = 1 / (Theta - s)` with `s` the slope of `n_seed`.
pub fn z_from(theta: f64, seed_slope: f64) -> Result<f64> {
    let gap = theta - seed_slope;
    if !(gap > 0.0) {
        return Err(Error::Fit(format!(
            "Theta - s = {gap} is not positive; z is undefined"
        )));
    }
    Ok(1.0 / gap)
}

/// First-order error propagation for `z`, treating both errors as independent.
pub fn propagate_z(theta_fit: &FitResult, seed_slope_fit: &FitResult) -> Result<FitResult> {
    let z = z_from(theta_fit.exponent, seed_slope_fit.exponent)?;
    let error = z * z * (theta_fit.error.powi(2) + seed_slope_fit.error.powi(2)).sqrt();
    Ok(FitResult {
        exponent: z,
        amplitude: f64::NAN,
        window: theta_fit.window,
        n_points: theta_fit.n_points,
        residual_rms: f64::NAN,
        error,
        method: ErrorMethod::Propagated,
    })
}

/// `z` with a joint bootstrap: each resample refits both `N_a` and `n_seed`
/// on the same trajectories, so their correlation is carried into `z`.
pub fn bootstrap_z(
    records: &[TrajectoryRecord],
    window: (f64, f64),
    n_resample: usize,
    seed: u64,
) -> Result<FitResult> {
    let first = records
        .first()
        .ok_or_else(|| Error::Fit("no trajectories to resample".into()))?;
    let times = &first.times;
    let na = observable_columns(records, TrajectoryObservable::TotalDensity);
    let ns = observable_columns(records, TrajectoryObservable::SeedDensity);
    let theta = powerlaw_fit(times, &mean_series(&na).mean, window)?;
    let s = powerlaw_fit(times, &mean_series(&ns).mean, window)?;
    let z = z_from(theta.exponent, s.exponent)?;
    let zs: Vec<f64> = (0..n_resample as u64)
        .into_par_iter()
        .map(|draw| {
            let idx = resample_indices(records.len(), seed, draw);
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| na[i].clone()).collect();
            let b: Vec<Vec<f64>> = idx.iter().map(|&i| ns[i].clone()).collect();
            let th = powerlaw_fit(times, &mean_series(&a).mean, window)?.exponent;
            let sl = powerlaw_fit(times, &mean_series(&b).mean, window)?.exponent;
            z_from(th, sl)
        })
        .collect::<Result<_>>()?;
    Ok(FitResult {
        exponent: z,
        amplitude: f64::NAN,
        window,
        n_points: theta.n_points,
        residual_rms: f64::NAN,
        error: 2.0 * spread(&zs),
        method: ErrorMethod::Bootstrap2Sigma,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub label: String,
    pub reference: f64,
    pub estimate: f64,
    pub standard_error: f64,
    /// `(estimate - reference) / standard_error`.
    pub n_standard_errors: f64,
}

/// Distance of a fit from a reference value in standard errors. Bootstrap
/// errors are two standard deviations, so the standard error is half of it.
pub fn compare_to_reference(fit: &FitResult, reference: f64, label: &str) -> Significance {
    let se = match fit.method {
        ErrorMethod::Bootstrap2Sigma => fit.error / 2.0,
        _ => fit.error,
    };
    let diff = fit.exponent - reference;
    Significance {
        label: label.to_string(),
        reference,
        estimate: fit.exponent,
        standard_error: se,
        n_standard_errors: if diff == 0.0 { 0.0 } else { diff / se },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exact_power_law() {
        let t = grid(1.0, 10.0, 91);
        let y: Vec<f64> = t.iter().map(|t| 2.5 * t.powf(-0.16)).collect();
        let f = powerlaw_fit(&t, &y, (5.0, 10.0)).unwrap();
        assert!((f.exponent + 0.16).abs() < 1e-12);
        assert!((f.amplitude - 2.5).abs() < 1e-10);
        assert!(f.residual_rms < 1e-12);
        let c: Vec<f64> = t.iter().map(|_| 0.7).collect();
        assert!(powerlaw_fit(&t, &c, (2.0, 4.0)).unwrap().exponent.abs() < 1e-14);
    }

    #[test]
    fn single_precision_input() {
        let t: Vec<f32> = (1..=20).map(|i| i as f32).collect();
        let y: Vec<f32> = t.iter().map(|t| t.powf(0.3)).collect();
        let f = powerlaw_fit(&t, &y, (2.0, 20.0)).unwrap();
        assert!((f.exponent - 0.3).abs() < 1e-5);
    }

    #[test]
    fn fit_errors() {
        let t = grid(0.0, 10.0, 101);
        let y: Vec<f64> = t.iter().map(|t| 1.0 - 0.2 * t).collect();
        assert!(matches!(powerlaw_fit(&t, &y, (5.0, 10.0)), Err(Error::Fit(_))));
        let y: Vec<f64> = t.iter().map(|t| 1.0 + t).collect();
        let err = powerlaw_fit(&t, &y, (5.0, 12.0)).unwrap_err();
        assert!(err.to_string().contains("[5, 12]"));
        assert!(powerlaw_fit(&t, &y, (5.0, 5.2)).is_err());
    }

    #[test]
    fn z_identities() {
        let theta = FitResult {
            exponent: 0.31,
            amplitude: 1.0,
            window: (5.0, 10.0),
            n_points: 51,
            residual_rms: 0.0,
            error: 0.0,
            method: ErrorMethod::None,
        };
        let s = FitResult { exponent: 0.31 - 1.0 / 1.58, ..theta };
        let z = propagate_z(&theta, &s).unwrap();
        assert!((z.exponent - 1.58).abs() < 1e-12);
        assert_eq!(z.error, 0.0);
        assert!(propagate_z(&theta, &FitResult { exponent: 0.4, ..theta }).is_err());
    }

    #[test]
    fn reference_comparison() {
        let fit = FitResult {
            exponent: 0.26,
            amplitude: 1.0,
            window: (5.0, 10.0),
            n_points: 51,
            residual_rms: 0.0,
            error: 0.04,
            method: ErrorMethod::Bootstrap2Sigma,
        };
        assert!((compare_to_reference(&fit, 0.16, "1d DP").n_standard_errors - 5.0).abs() < 1e-9);
        assert!((compare_to_reference(&fit, 0.45, "2d DP").n_standard_errors + 9.5).abs() < 1e-9);
        assert_eq!(compare_to_reference(&fit, 0.26, "self").n_standard_errors, 0.0);
        let chi = chi_difference_error(&fit, &FitResult { exponent: 0.2, ..fit }).unwrap();
        assert!((chi.error - 0.06).abs() < 1e-15);
        assert!(chi_difference_error(&fit, &FitResult { window: (2.0, 4.0), ..fit }).is_err());
    }
}
