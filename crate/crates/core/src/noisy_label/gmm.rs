use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to component variances after every M-step.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Samples with clean probability at or above this are treated as clean.
pub const CLEAN_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

impl Gaussian {
    fn log_density(&self, x: f64) -> f64 {
        -0.5 * ((x - self.mean).powi(2) / self.variance + (2.0 * std::f64::consts::PI * self.variance).ln())
    }
}

/// Two-component 1D mixture; `clean` is the lower-mean component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gmm2 {
    pub clean: Gaussian,
    pub noisy: Gaussian,
}

/// Per-sample clean probabilities and the resulting clean/noisy split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePartition {
    pub lambda_gmm: Vec<f64>,
    pub is_clean: Vec<bool>,
    /// Fitted on min-max normalized losses.
    pub gmm: Gmm2,
    /// Mean log-likelihood at initialization and after every EM iteration.
    pub log_likelihood: Vec<f64>,
}

impl SamplePartition {
    /// Every sample clean with certainty; used when losses cannot be split.
    pub fn all_clean(n: usize) -> Self {
        let unit = Gaussian {
            mean: 0.0,
            variance: 1.0,
            weight: 1.0,
        };
        SamplePartition {
            lambda_gmm: vec![1.0; n],
            is_clean: vec![true; n],
            gmm: Gmm2 {
                clean: unit,
                noisy: Gaussian { weight: 0.0, ..unit },
            },
            log_likelihood: Vec::new(),
        }
    }

    pub fn clean_fraction(&self) -> f64 {
        if self.is_clean.is_empty() {
            return 0.0;
        }
        self.is_clean.iter().filter(|&&c| c).count() as f64 / self.is_clean.len() as f64
    }
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Mean log-likelihood and component-0 responsibilities.
fn e_step(x: &[f64], comps: &[Gaussian; 2], resp: &mut [f64]) -> f64 {
    let mut ll = 0.0;
    for (r, &v) in resp.iter_mut().zip(x) {
        let a = comps[0].weight.ln() + comps[0].log_density(v);
        let b = comps[1].weight.ln() + comps[1].log_density(v);
        let total = log_sum_exp(a, b);
        *r = (a - total).exp();
        ll += total;
    }
    ll / x.len() as f64
}

fn m_step(x: &[f64], resp: &[f64], comps: &mut [Gaussian; 2]) {
    let n = x.len() as f64;
    for (k, comp) in comps.iter_mut().enumerate() {
        let r = |i: usize| if k == 0 { resp[i] } else { 1.0 - resp[i] };
        let nk: f64 = (0..x.len()).map(r).sum();
        comp.weight = (nk / n).max(f64::MIN_POSITIVE);
        if nk < 1e-12 {
            continue;
        }
        comp.mean = (0..x.len()).map(|i| r(i) * x[i]).sum::<f64>() / nk;
        comp.variance = ((0..x.len()).map(|i| r(i) * (x[i] - comp.mean).powi(2)).sum::<f64>() / nk)
            .max(VARIANCE_FLOOR);
    }
}

/// Makes clean probability non-increasing in loss.
///
/// With unequal variances the posterior of the lower-mean component turns back
/// up in one tail: the far right tail when the clean component is wider, the
/// far left tail when it is narrower. The tail is flattened to the adjacent
/// extreme value.
fn enforce_monotone(x: &[f64], lambda: &mut [f64], clean_wider: bool) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    if clean_wider {
        let mut m = f64::INFINITY;
        for &i in &order {
            m = m.min(lambda[i]);
            lambda[i] = m;
        }
    } else {
        let mut m = f64::NEG_INFINITY;
        for &i in order.iter().rev() {
            m = m.max(lambda[i]);
            lambda[i] = m;
        }
    }
}

/// Fits a two-component Gaussian mixture to per-sample losses with exactly
/// `em_iters` EM iterations and returns the clean posterior of every sample.
///
/// Losses are min-max normalized first. Components start at the 10th and 90th
/// percentiles with equal weights and the sample variance.
pub fn fit_gmm2(losses: &[f64], em_iters: usize) -> Result<SamplePartition> {
    if losses.len() < 2 {
        return Err(Error::InvalidInput("mixture fitting needs at least two losses".into()));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidInput("losses must be finite".into()));
    }
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::DegenerateLosses);
    }
    let x: Vec<f64> = losses.iter().map(|&l| (l - lo) / (hi - lo)).collect();

    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let (mut m0, mut m1) = (percentile(&sorted, 0.1), percentile(&sorted, 0.9));
    if m1 <= m0 {
        (m0, m1) = (0.0, 1.0);
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).max(VARIANCE_FLOOR);
    let mut comps = [
        Gaussian {
            mean: m0,
            variance: var,
            weight: 0.5,
        },
        Gaussian {
            mean: m1,
            variance: var,
            weight: 0.5,
        },
    ];

    let mut resp = vec![0.0; x.len()];
    let mut log_likelihood = Vec::with_capacity(em_iters + 1);
    for _ in 0..em_iters {
        log_likelihood.push(e_step(&x, &comps, &mut resp));
        m_step(&x, &resp, &mut comps);
    }
    log_likelihood.push(e_step(&x, &comps, &mut resp));

    let (clean, noisy, mut lambda) = if comps[0].mean <= comps[1].mean {
        (comps[0], comps[1], resp)
    } else {
        (comps[1], comps[0], resp.iter().map(|r| 1.0 - r).collect())
    };
    enforce_monotone(&x, &mut lambda, clean.variance > noisy.variance);
    let is_clean = lambda.iter().map(|&l| l >= CLEAN_CUTOFF).collect();
    Ok(SamplePartition {
        lambda_gmm: lambda,
        is_clean,
        gmm: Gmm2 { clean, noisy },
        log_likelihood,
    })
}
