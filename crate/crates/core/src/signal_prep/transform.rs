use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target sampling rate and window rules applied to every recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub rate: f64,
    /// Fixed model input length in seconds.
    pub window_secs: f64,
    /// Recordings longer than this are randomly shortened during training.
    pub min_secs: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            rate: 500.0,
            window_secs: 15.0,
            min_secs: 10.0,
        }
    }
}

impl WindowConfig {
    pub fn window_len(&self) -> usize {
        (self.window_secs * self.rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.window_secs > 0.0 && self.min_secs > 0.0 && self.min_secs <= self.window_secs) {
            return Err(Error::Config(format!("invalid window {self:?}")));
        }
        Ok(())
    }
}

/// Linear-interpolation resampling of every lead from `src_rate` to `dst_rate`.
pub fn resample(signal: &[Vec<f32>], src_rate: f64, dst_rate: f64) -> Result<Vec<Vec<f32>>> {
    if signal.is_empty() || signal.iter().any(Vec::is_empty) {
        return Err(Error::InvalidInput("cannot resample an empty signal".into()));
    }
    if !(src_rate > 0.0 && dst_rate > 0.0) {
        return Err(Error::InvalidInput(format!("sample rates must be positive ({src_rate} → {dst_rate})")));
    }
    if src_rate == dst_rate {
        return Ok(signal.to_vec());
    }
    let ratio = src_rate / dst_rate;
    Ok(signal
        .iter()
        .map(|lead| {
            let n = lead.len();
            let out_len = ((n as f64) * dst_rate / src_rate).round().max(1.0) as usize;
            (0..out_len)
                .map(|j| {
                    let pos = j as f64 * ratio;
                    let i = (pos.floor() as usize).min(n - 1);
                    let frac = pos - i as f64;
                    if i + 1 >= n || frac == 0.0 {
                        lead[i]
                    } else {
                        let (a, b) = (lead[i] as f64, lead[i + 1] as f64);
                        (a + frac * (b - a)) as f32
                    }
                })
                .collect()
        })
        .collect())
}

/// Affine map of one lead onto `[-1, 1]`; a constant lead maps to zeros.
pub fn minmax_normalize(lead: &[f32]) -> Vec<f32> {
    let (lo, hi) = lead
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lead.is_empty() || hi <= lo {
        return vec![0.0; lead.len()];
    }
    let (lo, span) = (lo as f64, hi as f64 - lo as f64);
    lead.iter()
        .map(|&v| ((v as f64 - lo) / span * 2.0 - 1.0) as f32)
        .collect()
}

/// Copies `duration` samples starting at `start` into a zero-padded window of `window` samples.
pub fn crop_pad_at(signal: &[Vec<f32>], start: usize, duration: usize, window: usize) -> Vec<Vec<f32>> {
    signal
        .iter()
        .map(|lead| {
            let end = (start + duration).min(lead.len()).min(start + window);
            let mut out = vec![0.0; window];
            let src = &lead[start.min(end)..end];
            out[..src.len()].copy_from_slice(src);
            out
        })
        .collect()
}

/// Training-time window: recordings longer than `min_secs` are shortened to a
/// duration drawn from `U(min_secs, min(τ, window_secs))` at a random start;
/// the result is always zero-padded to the full window.
pub fn crop_pad<R: Rng + ?Sized>(signal: &[Vec<f32>], cfg: &WindowConfig, rng: &mut R) -> Vec<Vec<f32>> {
    let n = signal.first().map_or(0, Vec::len);
    let window = cfg.window_len();
    let tau = n as f64 / cfg.rate;
    if tau <= cfg.min_secs {
        return crop_pad_at(signal, 0, n, window);
    }
    let upper = tau.min(cfg.window_secs);
    let secs = if upper > cfg.min_secs {
        rng.random_range(cfg.min_secs..upper)
    } else {
        upper
    };
    let duration = ((secs * cfg.rate).round() as usize).clamp(1, n.min(window));
    let start = rng.random_range(0..=n - duration);
    crop_pad_at(signal, start, duration, window)
}

/// Deterministic window used outside training: the leading `min(τ, window_secs)` seconds.
pub fn crop_pad_eval(signal: &[Vec<f32>], cfg: &WindowConfig) -> Vec<Vec<f32>> {
    let n = signal.first().map_or(0, Vec::len);
    let window = cfg.window_len();
    crop_pad_at(signal, 0, n.min(window), window)
}
