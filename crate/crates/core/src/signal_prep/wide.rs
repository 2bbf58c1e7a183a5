use serde::{Deserialize, Serialize};

use super::{Gender, Record};

/// Fraction of the lead maximum a peak must exceed.
pub const PEAK_THRESHOLD: f64 = 0.6;
/// Minimum spacing between detected beats.
pub const REFRACTORY_SECS: f64 = 0.3;

/// Age, gender and RR-interval summary of one recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WideFeatures {
    /// Age / 100 clamped to `[0, 1]`; 0.5 when unknown.
    pub age_norm: f64,
    /// One-hot over male, female, unknown.
    pub gender_onehot: [f64; 3],
    /// Mean, std, min and max RR interval in seconds, then heart rate in bpm.
    /// All zero when fewer than two beats were found.
    pub rr_stats: [f64; 5],
}

impl WideFeatures {
    pub const LEN: usize = 9;

    pub fn to_array(&self) -> [f64; Self::LEN] {
        let mut out = [0.0; Self::LEN];
        out[0] = self.age_norm;
        out[1..4].copy_from_slice(&self.gender_onehot);
        out[4..].copy_from_slice(&self.rr_stats);
        out
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() != Self::LEN {
            return None;
        }
        Some(WideFeatures {
            age_norm: v[0],
            gender_onehot: [v[1], v[2], v[3]],
            rr_stats: [v[4], v[5], v[6], v[7], v[8]],
        })
    }
}

pub fn normalize_age(age: Option<f64>) -> f64 {
    match age {
        Some(a) if a.is_finite() => (a / 100.0).clamp(0.0, 1.0),
        _ => 0.5,
    }
}

pub fn gender_onehot(g: Gender) -> [f64; 3] {
    match g {
        Gender::Male => [1.0, 0.0, 0.0],
        Gender::Female => [0.0, 1.0, 0.0],
        Gender::Unknown => [0.0, 0.0, 1.0],
    }
}

/// Sample indices of local maxima above `PEAK_THRESHOLD × max(lead)`, at least
/// `REFRACTORY_SECS` apart; within a refractory window the tallest peak wins.
pub fn detect_peaks(lead: &[f32], sample_rate: f64) -> Vec<usize> {
    let max = lead.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if lead.len() < 3 || !(max > 0.0) {
        return Vec::new();
    }
    let threshold = PEAK_THRESHOLD * max as f64;
    let refractory = (REFRACTORY_SECS * sample_rate).round() as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..lead.len() - 1 {
        let v = lead[i];
        if (v as f64) <= threshold || v < lead[i - 1] || v <= lead[i + 1] {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if i - *last < refractory => {
                if v > lead[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }
    peaks
}

/// `[mean, std, min, max]` of RR intervals in seconds and heart rate in bpm.
pub fn rr_statistics(peaks: &[usize], sample_rate: f64) -> [f64; 5] {
    if peaks.len() < 2 {
        return [0.0; 5];
    }
    let rr: Vec<f64> = peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / sample_rate)
        .collect();
    let n = rr.len() as f64;
    let mean = rr.iter().sum::<f64>() / n;
    let std = (rr.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = rr.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [mean, std, min, max, 60.0 / mean]
}

/// Wide features of a record; RR statistics come from lead II.
pub fn extract_wide_features(record: &Record) -> WideFeatures {
    let rr_stats = record
        .lead("II")
        .map(|lead| rr_statistics(&detect_peaks(lead, record.sample_rate), record.sample_rate))
        .unwrap_or([0.0; 5]);
    WideFeatures {
        age_norm: normalize_age(record.age),
        gender_onehot: gender_onehot(record.gender),
        rr_stats,
    }
}
