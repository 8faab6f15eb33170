//! Logistic and normal maximum-likelihood fits of publication years.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error("need at least {need} distinct values, got {got}")]
    TooFewDistinct { need: usize, got: usize },
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("Newton iteration did not converge; best gradient norm {}", .0.gradient_norm)]
    NotConverged(LogisticFit),
}

/// `1 / (1 + e^{−(t−μ)/β})`
pub fn logistic_cdf(t: f64, mu: f64, beta: f64) -> f64 {
    let z = (t - mu) / beta;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logistic_pdf(t: f64, mu: f64, beta: f64) -> f64 {
    let z = -((t - mu) / beta).abs();
    let e = z.exp();
    e / (beta * (1.0 + e) * (1.0 + e))
}

/// Inverse of [`logistic_cdf`] for `p` in (0, 1).
pub fn logistic_quantile(p: f64, mu: f64, beta: f64) -> f64 {
    mu + beta * (p / (1.0 - p)).ln()
}

fn log_logistic_pdf(t: f64, mu: f64, beta: f64) -> f64 {
    let z = (t - mu) / beta;
    // −z − 2 ln(1 + e^{−z}) written in terms of |z|.
    let a = z.abs();
    -beta.ln() - a - 2.0 * (-a).exp().ln_1p()
}

/// Largest `|f′(t) − f(t)(1 − f(t))/β|` over the grid, with `f′` taken by
/// central differences of step `h`.
pub fn verify_logistic_ode(mu: f64, beta: f64, grid: &[f64], h: f64) -> f64 {
    grid.iter()
        .map(|&t| {
            let f = logistic_cdf(t, mu, beta);
            let df = (logistic_cdf(t + h, mu, beta) - logistic_cdf(t - h, mu, beta)) / (2.0 * h);
            (df - (1.0 - f) * f / beta).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub mu: f64,
    pub beta: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub loglik: f64,
}

pub fn logistic_loglik(samples: &[f64], mu: f64, beta: f64) -> f64 {
    samples.iter().map(|&t| log_logistic_pdf(t, mu, beta)).sum()
}

/// Gradient of the logistic log-likelihood in `(μ, β)`.
pub fn logistic_gradient(samples: &[f64], mu: f64, beta: f64) -> [f64; 2] {
    let (mut gm, mut gb) = (0.0, -(samples.len() as f64) / beta);
    for &t in samples {
        let z = (t - mu) / beta;
        let s = 2.0 * logistic_cdf(z, 0.0, 1.0) - 1.0;
        gm += s / beta;
        gb += z * s / beta;
    }
    [gm, gb]
}

fn logistic_hessian(samples: &[f64], mu: f64, beta: f64) -> [[f64; 2]; 2] {
    let n = samples.len() as f64;
    let (mut ss, mut zs, mut w, mut zw, mut zzw) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &t in samples {
        let z = (t - mu) / beta;
        let f = logistic_cdf(z, 0.0, 1.0);
        let v = f * (1.0 - f);
        ss += 2.0 * f - 1.0;
        zs += z * (2.0 * f - 1.0);
        w += v;
        zw += z * v;
        zzw += z * z * v;
    }
    let b2 = beta * beta;
    let hmm = -2.0 * w / b2;
    let hmb = -(ss + 2.0 * zw) / b2;
    let hbb = (n - 2.0 * zs - 2.0 * zzw) / b2;
    [[hmm, hmb], [hmb, hbb]]
}

fn distinct(samples: &[f64]) -> usize {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn check(samples: &[f64], need: usize) -> Result<(), GrowthError> {
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(GrowthError::NonFinite);
    }
    let got = distinct(samples);
    if got < need {
        return Err(GrowthError::TooFewDistinct { need, got });
    }
    Ok(())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

const MAX_NEWTON: usize = 200;
const GRADIENT_TOL: f64 = 1e-8;

/// Newton ascent on the log-likelihood from the median and the
/// moment-matched scale. Steps that leave `β > 0` or fail to increase the
/// likelihood are halved; where the Hessian is not negative definite the
/// step falls back to the scaled gradient.
pub fn fit_logistic_mle(samples: &[f64]) -> Result<LogisticFit, GrowthError> {
    check(samples, 3)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = normal_moments(samples);
    let mut mu = quantile(&sorted, 0.5);
    let mut beta = normal.1 * 3f64.sqrt() / std::f64::consts::PI;
    let mut ll = logistic_loglik(samples, mu, beta);
    let mut iterations = 0;
    loop {
        let g = logistic_gradient(samples, mu, beta);
        let gnorm = g[0].abs().max(g[1].abs());
        let fit = LogisticFit { mu, beta, loglik: ll, iterations, gradient_norm: gnorm };
        if gnorm <= GRADIENT_TOL {
            return Ok(fit);
        }
        if iterations == MAX_NEWTON {
            return Err(GrowthError::NotConverged(fit));
        }
        iterations += 1;
        let h = logistic_hessian(samples, mu, beta);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let mut step = if h[0][0] < 0.0 && det > 0.0 {
            [
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            ]
        } else {
            let scale = beta * beta / samples.len() as f64;
            [g[0] * scale, g[1] * scale]
        };
        let mut moved = false;
        for _ in 0..60 {
            let (m2, b2) = (mu + step[0], beta + step[1]);
            if b2 > 0.0 {
                let l2 = logistic_loglik(samples, m2, b2);
                // Near the optimum the change is below the rounding of the sum.
                if l2 >= ll - 16.0 * f64::EPSILON * ll.abs() {
                    (mu, beta, ll) = (m2, b2, l2);
                    moved = true;
                    break;
                }
            }
            step = [step[0] / 2.0, step[1] / 2.0];
        }
        if !moved {
            // No ascent left at machine precision.
            let g = logistic_gradient(samples, mu, beta);
            let gradient_norm = g[0].abs().max(g[1].abs());
            let fit = LogisticFit { mu, beta, loglik: ll, iterations, gradient_norm };
            return if gradient_norm <= GRADIENT_TOL { Ok(fit) } else { Err(GrowthError::NotConverged(fit)) };
        }
    }
}

fn normal_moments(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn normal_pdf(t: f64, mu: f64, sigma: f64) -> f64 {
    let z = (t - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Sample mean and the `1/n` standard deviation, with the log-likelihood
/// summed point by point.
pub fn fit_normal_mle(samples: &[f64]) -> Result<NormalFit, GrowthError> {
    check(samples, 2)?;
    let (mu, sigma) = normal_moments(samples);
    let loglik = samples
        .iter()
        .map(|&t| {
            let z = (t - mu) / sigma;
            -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        })
        .sum();
    Ok(NormalFit { mu, sigma, loglik })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
    /// Count divided by sample size and bin width.
    pub density: f64,
    pub logistic_density: f64,
    pub normal_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub t: f64,
    pub empirical: f64,
    pub logistic: f64,
}

/// Freedman–Diaconis bin width `2·IQR·n^{−1/3}`, or the range over `√n`
/// when the quartiles coincide.
pub fn freedman_diaconis_width(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let w = 2.0 * iqr / n.cbrt();
    if w > 0.0 {
        w
    } else {
        let range = s[s.len() - 1] - s[0];
        if range > 0.0 { range / n.sqrt() } else { 1.0 }
    }
}

pub fn histogram(samples: &[f64], width: f64, logistic: &LogisticFit, normal: &NormalFit) -> Vec<HistogramBin> {
    if samples.is_empty() {
        return Vec::new();
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = (((hi - lo) / width).floor() as usize + 1).max(1);
    let mut counts = vec![0usize; bins];
    for &v in samples {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let n = samples.len() as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| {
            let left = lo + k as f64 * width;
            let mid = left + width / 2.0;
            HistogramBin {
                left,
                right: left + width,
                count,
                density: count as f64 / (n * width),
                logistic_density: logistic_pdf(mid, logistic.mu, logistic.beta),
                normal_density: normal_pdf(mid, normal.mu, normal.sigma),
            }
        })
        .collect()
}

pub fn ecdf(samples: &[f64], logistic: &LogisticFit) -> Vec<EcdfPoint> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(k, &t)| EcdfPoint {
            t,
            empirical: (k + 1) as f64 / n,
            logistic: logistic_cdf(t, logistic.mu, logistic.beta),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub logistic: LogisticFit,
    pub normal: NormalFit,
    /// Logistic minus normal log-likelihood.
    pub delta_loglik: f64,
    pub bin_width: f64,
    pub histogram: Vec<HistogramBin>,
    pub ecdf: Vec<EcdfPoint>,
}

/// Both fits, with plot tables. `bin_width` defaults to Freedman–Diaconis.
pub fn compare_models(samples: &[f64], bin_width: Option<f64>) -> Result<FitReport, GrowthError> {
    let logistic = fit_logistic_mle(samples)?;
    let normal = fit_normal_mle(samples)?;
    let width = bin_width.unwrap_or_else(|| freedman_diaconis_width(samples));
    Ok(FitReport {
        n: samples.len(),
        delta_loglik: logistic.loglik - normal.loglik,
        histogram: histogram(samples, width, &logistic, &normal),
        ecdf: ecdf(samples, &logistic),
        bin_width: width,
        logistic,
        normal,
    })
}
