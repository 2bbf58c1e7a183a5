//! On-disk dataset layout and the in-memory prepared set.
//!
//! A dataset directory holds `records.jsonl`, one JSON object per record:
//!
//! ```json
//! {"id":"rec0001","sample_rate":500.0,"lead_names":["I","II"],"age":63.0,
//!  "gender":"female","labels":[0,1,0],"true_labels":[0,1,1],"wide":[...]}
//! ```
//!
//! and one `<id>.bin` per record with the samples as little-endian `f32`,
//! lead-major (all of lead 0, then all of lead 1, ...). `true_labels` is only
//! present for synthetic data; `wide` is written by `prep` and holds the nine
//! wide features computed from the original recording.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::nn::Tensor3;

use super::{
    crop_pad, crop_pad_eval, extract_wide_features, minmax_normalize, resample, select_leads, Gender,
    LeadCombo, Record, WideFeatures, WindowConfig,
};

pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub id: String,
    pub sample_rate: f64,
    pub lead_names: Vec<String>,
    #[serde(default)]
    pub age: Option<f64>,
    #[serde(default)]
    pub gender: Gender,
    pub labels: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_labels: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wide: Option<Vec<f64>>,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return Err(Error::InvalidInput(format!("record id {id:?} is not a plain file stem")));
    }
    Ok(())
}

/// Reads every record (and any stored wide features) from a dataset directory.
pub fn read_dataset(dir: &Path) -> Result<Vec<(Record, Option<WideFeatures>)>> {
    let index = dir.join(RECORDS_FILE);
    let reader = BufReader::new(File::open(&index).at(&index)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.at(&index)?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: RecordMeta = serde_json::from_str(&line)?;
        check_id(&meta.id)?;
        let bin = dir.join(format!("{}.bin", meta.id));
        let bytes = fs::read(&bin).at(&bin)?;
        let n_leads = meta.lead_names.len();
        if n_leads == 0 || bytes.len() % (4 * n_leads) != 0 {
            return Err(Error::InvalidInput(format!(
                "{}: {} bytes do not split into {n_leads} f32 leads",
                bin.display(),
                bytes.len()
            )));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let per_lead = values.len() / n_leads;
        let signal = values.chunks(per_lead.max(1)).map(<[f32]>::to_vec).take(n_leads).collect();
        let wide = match &meta.wide {
            Some(v) => Some(WideFeatures::from_slice(v).ok_or_else(|| {
                Error::InvalidInput(format!("{}: wide features need {} values", meta.id, WideFeatures::LEN))
            })?),
            None => None,
        };
        let record = Record {
            id: meta.id,
            signal,
            sample_rate: meta.sample_rate,
            lead_names: meta.lead_names,
            age: meta.age,
            gender: meta.gender,
            labels: meta.labels,
            true_labels: meta.true_labels,
        };
        record.validate()?;
        out.push((record, wide));
    }
    Ok(out)
}

/// Writes records (with optional precomputed wide features) as a dataset directory.
pub fn write_dataset(dir: &Path, records: &[(Record, Option<WideFeatures>)]) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let index = dir.join(RECORDS_FILE);
    let mut w = BufWriter::new(File::create(&index).at(&index)?);
    for (r, wide) in records {
        check_id(&r.id)?;
        r.validate()?;
        let meta = RecordMeta {
            id: r.id.clone(),
            sample_rate: r.sample_rate,
            lead_names: r.lead_names.clone(),
            age: r.age,
            gender: r.gender,
            labels: r.labels.clone(),
            true_labels: r.true_labels.clone(),
            wide: wide.map(|f| f.to_array().to_vec()),
        };
        serde_json::to_writer(&mut w, &meta)?;
        w.write_all(b"\n").at(&index)?;
        let bin = dir.join(format!("{}.bin", r.id));
        let mut bytes = Vec::with_capacity(r.signal.len() * r.n_samples() * 4);
        for lead in &r.signal {
            for v in lead {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(&bin, bytes).at(&bin)?;
    }
    w.flush().at(&index)
}

/// A recording after lead selection, resampling and per-lead normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    /// Normalized leads at the window rate, full recorded length.
    pub signal: Vec<Vec<f32>>,
    pub wide: WideFeatures,
    pub labels: Vec<u8>,
    pub true_labels: Option<Vec<u8>>,
}

/// Resamples, normalizes and selects the leads of one record. Wide features are
/// taken from `wide` when given, otherwise computed from the original record.
pub fn prepare_record(
    record: &Record,
    combo: LeadCombo,
    window: &WindowConfig,
    wide: Option<WideFeatures>,
) -> Result<PreparedSample> {
    record.validate()?;
    let wide = wide.unwrap_or_else(|| extract_wide_features(record));
    let selected = select_leads(record, combo)?;
    let signal = resample(&selected, record.sample_rate, window.rate)?
        .iter()
        .map(|l| minmax_normalize(l))
        .collect();
    Ok(PreparedSample {
        id: record.id.clone(),
        signal,
        wide,
        labels: record.labels.clone(),
        true_labels: record.true_labels.clone(),
    })
}

/// Model-ready samples sharing one lead combination and window.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSet {
    pub combo: LeadCombo,
    pub window: WindowConfig,
    pub n_labels: usize,
    pub samples: Vec<PreparedSample>,
}

impl PreparedSet {
    pub fn from_records(
        records: &[(Record, Option<WideFeatures>)],
        combo: LeadCombo,
        window: WindowConfig,
    ) -> Result<Self> {
        window.validate()?;
        let samples = records
            .iter()
            .map(|(r, w)| prepare_record(r, combo, &window, *w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(combo, window, samples)
    }

    pub fn new(combo: LeadCombo, window: WindowConfig, samples: Vec<PreparedSample>) -> Result<Self> {
        let n_labels = samples.first().map_or(0, |s| s.labels.len());
        if samples.iter().any(|s| s.labels.len() != n_labels || s.signal.len() != combo.count()) {
            return Err(Error::InvalidInput("samples disagree on label count or lead count".into()));
        }
        Ok(PreparedSet {
            combo,
            window,
            n_labels,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> PreparedSet {
        PreparedSet {
            combo: self.combo,
            window: self.window,
            n_labels: self.n_labels,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn labels(&self) -> Vec<Vec<u8>> {
        self.samples.iter().map(|s| s.labels.clone()).collect()
    }

    /// Ground-truth labels where known, otherwise the training labels.
    pub fn reference_labels(&self) -> Vec<Vec<u8>> {
        self.samples
            .iter()
            .map(|s| s.true_labels.clone().unwrap_or_else(|| s.labels.clone()))
            .collect()
    }

    pub fn wide_tensor(&self, idx: &[usize]) -> Tensor3<f32> {
        let data = idx
            .iter()
            .flat_map(|&i| self.samples[i].wide.to_array())
            .map(|v| v as f32)
            .collect();
        Tensor3::from_vec(data, [idx.len(), WideFeatures::LEN, 1]).expect("wide tensor shape")
    }

    fn stack(&self, windows: Vec<Vec<Vec<f32>>>) -> Tensor3<f32> {
        let batch = windows.len();
        let len = self.window.window_len();
        let data = windows.into_iter().flatten().flatten().collect();
        Tensor3::from_vec(data, [batch, self.combo.count(), len]).expect("signal tensor shape")
    }

    /// Deterministic model inputs `(signal, wide)` for the given samples.
    pub fn eval_batch(&self, idx: &[usize]) -> (Tensor3<f32>, Tensor3<f32>) {
        let windows = idx
            .iter()
            .map(|&i| crop_pad_eval(&self.samples[i].signal, &self.window))
            .collect();
        (self.stack(windows), self.wide_tensor(idx))
    }

    /// Randomly cropped training inputs `(signal, wide)`.
    pub fn train_batch<R: Rng + ?Sized>(&self, idx: &[usize], rng: &mut R) -> (Tensor3<f32>, Tensor3<f32>) {
        let windows = idx
            .iter()
            .map(|&i| crop_pad(&self.samples[i].signal, &self.window, rng))
            .collect();
        (self.stack(windows), self.wide_tensor(idx))
    }

    /// Prepared records in dataset form, ready for [`write_dataset`].
    pub fn to_records(&self) -> Vec<(Record, Option<WideFeatures>)> {
        self.samples
            .iter()
            .map(|s| {
                let record = Record {
                    id: s.id.clone(),
                    signal: s.signal.clone(),
                    sample_rate: self.window.rate,
                    lead_names: self.combo.lead_names(),
                    age: None,
                    gender: Gender::Unknown,
                    labels: s.labels.clone(),
                    true_labels: s.true_labels.clone(),
                };
                (record, Some(s.wide))
            })
            .collect()
    }
}
