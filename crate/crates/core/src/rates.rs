//! Sampling rates of empirical measures in `W_2` and `W_inf`.
//!
//! `q_k(m)` bounds `W_inf(mu, mu^(m))` and `q~_k(m)` bounds `W_2(mu, mu^(m))`, up to a
//! constant, for a density bounded above and below on a domain in `R^k`.
//! [`empirical_w2_rate`] measures the `W_2` sampling error for `mu` uniform on the unit
//! cube and fits its log-log slope.

use std::io::{self, Write};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::EmpiricalMeasure;
use crate::rng;
use crate::transport::{self, pairwise_sum, TransportError, MAX_FLOW_ENTRIES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("rate for k = {k} is undefined at m = {m}")]
    DomainError { k: usize, m: usize },
    #[error("proxy transport needs {entries} cost entries, above the budget of {limit}")]
    BudgetExceeded { entries: usize, limit: usize },
    #[error("invalid rate experiment: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

pub type Result<T> = std::result::Result<T, RateError>;

fn check(k: usize, m: usize, min_m: usize) -> Result<f64> {
    if k == 0 || m < min_m {
        return Err(RateError::DomainError { k, m });
    }
    Ok(m as f64)
}

/// `W_inf` rate: `sqrt(log log m / m)` for k = 1 (needs m >= 3),
/// `(log m)^{3/4} / m^{1/2}` for k = 2, `(log m / m)^{1/k}` for k >= 3.
pub fn rate_q(k: usize, m: usize) -> Result<f64> {
    let x = check(k, m, if k == 1 { 3 } else { 2 })?;
    Ok(match k {
        1 => (x.ln().ln() / x).sqrt(),
        2 => x.ln().powf(0.75) / x.sqrt(),
        _ => (x.ln() / x).powf(1.0 / k as f64),
    })
}

/// `W_2` rate: `sqrt(log m / m)`, `(log m)^{3/4} / m^{1/2}`, `(log m / m)^{1/3}`,
/// `(log m)^{1/2} / m^{1/4}` for k = 1..4 and `m^{-1/k}` for k >= 5.
pub fn rate_q_tilde(k: usize, m: usize) -> Result<f64> {
    let x = check(k, m, 2)?;
    Ok(match k {
        1 => (x.ln() / x).sqrt(),
        2 => x.ln().powf(0.75) / x.sqrt(),
        3 => (x.ln() / x).powf(1.0 / 3.0),
        4 => x.ln().sqrt() / x.powf(0.25),
        _ => x.powf(-1.0 / k as f64),
    })
}

/// Exact `W_2(U[0,1], mu^(m))` from the sorted sample: the quantile coupling sends
/// `u in ((i-1)/m, i/m]` to the i-th order statistic.
pub fn w2_uniform_exact(sample: &mut [f64]) -> f64 {
    sample.sort_by(f64::total_cmp);
    let m = sample.len() as f64;
    let terms: Vec<f64> = sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let (a, b) = (i as f64 / m, (i + 1) as f64 / m);
            ((b - x).powi(3) - (a - x).powi(3)) / 3.0
        })
        .collect();
    pairwise_sum(&terms).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub k: usize,
    pub m_values: Vec<usize>,
    pub trials: usize,
    /// Atoms in the reference sample for `k >= 2`; `None` when `W_2` is exact.
    pub proxy_m: Option<usize>,
    pub measured_mean: Vec<f64>,
    pub measured_se: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Least-squares slope of `log(measured_mean)` against `log(m)`.
    pub fitted_slope: f64,
    pub fitted_intercept: f64,
    /// `measured_mean / predicted` at the smallest `m`.
    pub c_hat: f64,
    /// Whether `measured_mean / predicted <= c_hat` at each `m`.
    pub dominated: Vec<bool>,
}

impl RateReport {
    /// CSV `m,measured_mean,measured_se,predicted`.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "m,measured_mean,measured_se,predicted")?;
        for (i, m) in self.m_values.iter().enumerate() {
            writeln!(
                out,
                "{m},{},{},{}",
                self.measured_mean[i], self.measured_se[i], self.predicted[i]
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn uniform_cube(rng: &mut rng::Rng, m: usize, k: usize) -> EmpiricalMeasure {
    let coords = (0..m * k).map(|_| rng.random::<f64>()).collect();
    EmpiricalMeasure::from_flat(coords, k).expect("finite coordinates")
}

/// Mean `W_2` distance between `U[0,1]^k` and its `m`-sample empirical measure.
///
/// For `k = 1` the distance is exact. For `k >= 2` the continuous measure is
/// replaced by a fresh `proxy_m`-point sample each trial, which biases the
/// measured distance upward; `proxy_m` must be at least `50 * max(m_values)`
/// and `proxy_m * max(m_values)` at most the flow-solver budget.
pub fn empirical_w2_rate(
    k: usize,
    m_values: &[usize],
    trials: usize,
    proxy_m: usize,
    seed: u64,
) -> Result<RateReport> {
    if m_values.len() < 2 || m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RateError::InvalidInput("need at least two strictly increasing m values".into()));
    }
    if trials == 0 {
        return Err(RateError::InvalidInput("trials must be positive".into()));
    }
    let predicted = m_values
        .iter()
        .map(|&m| rate_q_tilde(k, m))
        .collect::<Result<Vec<_>>>()?;
    let max_m = *m_values.last().expect("nonempty");
    let proxy = if k == 1 {
        None
    } else {
        if proxy_m < 50 * max_m {
            return Err(RateError::InvalidInput(format!(
                "proxy sample of {proxy_m} atoms is below 50 * {max_m}"
            )));
        }
        let entries = proxy_m.saturating_mul(max_m);
        if entries > MAX_FLOW_ENTRIES {
            return Err(RateError::BudgetExceeded {
                entries,
                limit: MAX_FLOW_ENTRIES,
            });
        }
        Some(proxy_m)
    };

    let mut measured_mean = Vec::with_capacity(m_values.len());
    let mut measured_se = Vec::with_capacity(m_values.len());
    for (idx, &m) in m_values.iter().enumerate() {
        let distances = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::rng_stream(rng::trial_seed(seed, t as u64), idx as u64);
                match proxy {
                    None => {
                        let mut sample: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                        Ok(w2_uniform_exact(&mut sample))
                    }
                    Some(big) => {
                        let reference = uniform_cube(&mut rng, big, k);
                        let sample = uniform_cube(&mut rng, m, k);
                        Ok(transport::w2_exact(&reference, &sample)?.0)
                    }
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = pairwise_sum(&distances) / trials as f64;
        let se = if trials > 1 {
            let dev: Vec<f64> = distances.iter().map(|d| (d - mean).powi(2)).collect();
            (pairwise_sum(&dev) / (trials - 1) as f64 / trials as f64).sqrt()
        } else {
            0.0
        };
        measured_mean.push(mean);
        measured_se.push(se);
    }

    let logs_m: Vec<f64> = m_values.iter().map(|&m| (m as f64).ln()).collect();
    let logs_w: Vec<f64> = measured_mean.iter().map(|w| w.ln()).collect();
    let (fitted_slope, fitted_intercept) = least_squares(&logs_m, &logs_w);
    let c_hat = measured_mean[0] / predicted[0];
    let dominated = measured_mean
        .iter()
        .zip(&predicted)
        .map(|(w, q)| w / q <= c_hat)
        .collect();
    Ok(RateReport {
        k,
        m_values: m_values.to_vec(),
        trials,
        proxy_m: proxy,
        measured_mean,
        measured_se,
        predicted,
        fitted_slope,
        fitted_intercept,
        c_hat,
        dominated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_values() {
        assert!((rate_q_tilde(5, 10_000).unwrap() - 0.158_489_319_246_111_36).abs() < 1e-15);
        let expected = (8f64.ln() / 8.0).sqrt();
        assert!((rate_q_tilde(1, 8).unwrap() - expected).abs() < 1e-15);
        assert!((rate_q_tilde(1, 8).unwrap() - 0.50977).abs() < 1e-3);
        assert!(matches!(rate_q(1, 2), Err(RateError::DomainError { k: 1, m: 2 })));
        assert!(rate_q(1, 3).unwrap() > 0.0);
        assert!(rate_q_tilde(0, 10).is_err());
        assert!(rate_q_tilde(2, 1).is_err());
    }

    #[test]
    fn exact_uniform_distance() {
        // a single atom at 1/2: int_0^1 (u - 1/2)^2 du = 1/12
        assert!((w2_uniform_exact(&mut [0.5]) - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
        // midpoints of m cells: m * (1/(12 m^3))
        let m = 10;
        let mut mids: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).rev().collect();
        let expected = (1.0 / (12.0 * (m * m) as f64)).sqrt();
        assert!((w2_uniform_exact(&mut mids) - expected).abs() < 1e-14);
    }

    #[test]
    fn budget_and_input_checks() {
        assert!(matches!(
            empirical_w2_rate(2, &[100, 200], 1, 10_000, 0),
            Err(RateError::BudgetExceeded { .. })
        ));
        assert!(empirical_w2_rate(2, &[10, 20], 1, 500, 0).is_err());
        assert!(empirical_w2_rate(1, &[10, 10], 1, 0, 0).is_err());
        assert!(empirical_w2_rate(1, &[10, 20], 0, 0, 0).is_err());
    }

    #[test]
    fn deterministic_report() {
        let a = empirical_w2_rate(1, &[10, 40], 1, 0, 7).unwrap();
        let b = empirical_w2_rate(1, &[10, 40], 1, 0, 7).unwrap();
        assert_eq!(a, b);
        let p = empirical_w2_rate(2, &[4, 8], 3, 400, 7).unwrap();
        assert_eq!(p.proxy_m, Some(400));
        assert!(p.measured_mean.iter().all(|w| *w > 0.0));
    }
}
