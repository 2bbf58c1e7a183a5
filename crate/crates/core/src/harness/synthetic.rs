use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_prep::{Gender, Record, STANDARD_LEADS};

/// Parameters of the synthetic multichannel recordings and their label noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub n_labels: usize,
    /// Leads are taken in standard order, so 2 yields I and II.
    pub n_leads: usize,
    pub sample_rate: f64,
    pub min_secs: f64,
    pub max_secs: f64,
    /// Probability of each label being present.
    pub prevalence: f64,
    /// Label `k` oscillates at `min_freq + k·(max_freq − min_freq)/(n_labels − 1)` Hz.
    pub min_freq: f64,
    pub max_freq: f64,
    /// Relative per-record jitter of every label frequency.
    pub freq_jitter: f64,
    pub min_amplitude: f64,
    pub max_amplitude: f64,
    /// Mean beat rate of the pulse train in Hz.
    pub pulse_rate: f64,
    /// Relative spread of the beat rate across records.
    pub pulse_rate_spread: f64,
    pub pulse_amplitude: f64,
    pub pulse_width_secs: f64,
    pub noise_std: f64,
    /// Probability that a training label bit is flipped.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_samples: 1000,
            n_labels: 24,
            n_leads: 12,
            sample_rate: 500.0,
            min_secs: 10.0,
            max_secs: 20.0,
            prevalence: 0.25,
            min_freq: 2.0,
            max_freq: 40.0,
            freq_jitter: 0.03,
            min_amplitude: 0.2,
            max_amplitude: 0.4,
            pulse_rate: 1.0,
            pulse_rate_spread: 0.25,
            pulse_amplitude: 1.5,
            pulse_width_secs: 0.02,
            noise_std: 0.2,
            noise_rate: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.n_samples == 0 {
            return fail("n_samples must be positive");
        }
        if self.n_labels < 2 {
            return fail("n_labels must be at least 2");
        }
        if self.n_leads == 0 || self.n_leads > STANDARD_LEADS.len() {
            return fail("n_leads must be in 1..=12");
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return fail("noise_rate must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.prevalence) {
            return fail("prevalence must be in [0, 1]");
        }
        if !(self.sample_rate > 0.0) || !(self.min_secs > 0.0) || self.max_secs < self.min_secs {
            return fail("invalid sample rate or duration range");
        }
        if !(self.min_freq > 0.0) || self.max_freq < self.min_freq || 2.0 * self.max_freq >= self.sample_rate {
            return fail("label frequencies must be positive and below the Nyquist rate");
        }
        if self.min_amplitude < 0.0 || self.max_amplitude < self.min_amplitude || self.noise_std < 0.0 {
            return fail("invalid amplitude or noise level");
        }
        if !(self.pulse_rate > 0.0) || !(0.0..1.0).contains(&self.pulse_rate_spread) {
            return fail("invalid pulse rate");
        }
        Ok(())
    }

    pub fn label_frequency(&self, k: usize) -> f64 {
        self.min_freq + k as f64 * (self.max_freq - self.min_freq) / (self.n_labels - 1) as f64
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Records whose leads sum label-specific sinusoids, a jittered pulse train and
/// white noise. `labels` carry the flipped bits, `true_labels` the clean ones.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<Record>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let lead_names: Vec<String> = STANDARD_LEADS[..cfg.n_leads].iter().map(|s| s.to_string()).collect();
    let width = cfg.pulse_width_secs.max(1.0 / cfg.sample_rate);

    let mut records = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let truth: Vec<u8> = (0..cfg.n_labels).map(|_| rng.random_bool(cfg.prevalence) as u8).collect();
        let labels: Vec<u8> = truth.iter().map(|&y| y ^ rng.random_bool(cfg.noise_rate) as u8).collect();
        let secs = uniform(&mut rng, cfg.min_secs, cfg.max_secs);
        let n = (secs * cfg.sample_rate).round().max(1.0) as usize;

        let components: Vec<(f64, f64, Vec<f64>)> = (0..cfg.n_labels)
            .filter(|&k| truth[k] == 1)
            .map(|k| {
                let f = cfg.label_frequency(k) * (1.0 + uniform(&mut rng, -cfg.freq_jitter, cfg.freq_jitter));
                let a = uniform(&mut rng, cfg.min_amplitude, cfg.max_amplitude);
                let phases = (0..cfg.n_leads).map(|_| rng.random_range(0.0..TAU)).collect();
                (f, a, phases)
            })
            .collect();

        let rate = cfg.pulse_rate * (1.0 + uniform(&mut rng, -cfg.pulse_rate_spread, cfg.pulse_rate_spread));
        let mut beats = Vec::new();
        let mut t = rng.random_range(0.0..1.0 / rate);
        while t < secs {
            beats.push(t);
            t += (1.0 + uniform(&mut rng, -0.1, 0.1)) / rate;
        }
        let lead_gain: Vec<f64> = (0..cfg.n_leads).map(|_| uniform(&mut rng, 0.6, 1.0)).collect();

        let mut signal = vec![vec![0f32; n]; cfg.n_leads];
        for (l, lead) in signal.iter_mut().enumerate() {
            let mut next_beat = 0;
            for (s, v) in lead.iter_mut().enumerate() {
                let t = s as f64 / cfg.sample_rate;
                let mut x: f64 = components.iter().map(|(f, a, ph)| a * (TAU * f * t + ph[l]).sin()).sum();
                while next_beat < beats.len() && beats[next_beat] < t - 4.0 * width {
                    next_beat += 1;
                }
                for &b in beats[next_beat..].iter().take_while(|&&b| b <= t + 4.0 * width) {
                    x += lead_gain[l] * cfg.pulse_amplitude * (-0.5 * ((t - b) / width).powi(2)).exp();
                }
                x += noise.sample(&mut rng);
                *v = x as f32;
            }
        }

        let gender = match rng.random_range(0..3) {
            0 => Gender::Male,
            1 => Gender::Female,
            _ => Gender::Unknown,
        };
        records.push(Record {
            id: format!("syn{i:05}"),
            signal,
            sample_rate: cfg.sample_rate,
            lead_names: lead_names.clone(),
            age: Some(rng.random_range(20.0..90.0f64).round()),
            gender,
            labels,
            true_labels: Some(truth),
        });
    }
    Ok(records)
}
