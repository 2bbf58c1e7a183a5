use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

/// One multichannel recording with demographics and a multi-hot label vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    /// Lead-major samples; every lead has the same length.
    pub signal: Vec<Vec<f32>>,
    pub sample_rate: f64,
    pub lead_names: Vec<String>,
    pub age: Option<f64>,
    pub gender: Gender,
    /// Training labels (possibly noisy), one 0/1 entry per class.
    pub labels: Vec<u8>,
    /// Ground-truth labels when known; used only for evaluation.
    pub true_labels: Option<Vec<u8>>,
}

impl Record {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("{}: sample rate {}", self.id, self.sample_rate)));
        }
        if self.signal.is_empty() || self.signal.len() != self.lead_names.len() {
            return Err(Error::InvalidInput(format!(
                "{}: {} leads but {} lead names",
                self.id,
                self.signal.len(),
                self.lead_names.len()
            )));
        }
        let len = self.signal[0].len();
        if self.signal.iter().any(|l| l.len() != len) {
            return Err(Error::InvalidInput(format!("{}: leads differ in length", self.id)));
        }
        let bad_bits = |v: &[u8]| v.iter().any(|&b| b > 1);
        if bad_bits(&self.labels) {
            return Err(Error::InvalidInput(format!("{}: labels must be 0 or 1", self.id)));
        }
        if let Some(t) = &self.true_labels {
            if t.len() != self.labels.len() || bad_bits(t) {
                return Err(Error::InvalidInput(format!("{}: malformed true labels", self.id)));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.signal.first().map_or(0, Vec::len)
    }

    pub fn duration_secs(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate
    }

    pub fn lead(&self, name: &str) -> Option<&[f32]> {
        self.lead_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.signal[i].as_slice())
    }
}

/// One of the supported reduced-lead subsets of the standard 12 leads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum LeadCombo {
    Two,
    Three,
    Four,
    Six,
    Twelve,
}

pub const STANDARD_LEADS: [&str; 12] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

impl LeadCombo {
    pub const ALL: [LeadCombo; 5] = [
        LeadCombo::Twelve,
        LeadCombo::Six,
        LeadCombo::Four,
        LeadCombo::Three,
        LeadCombo::Two,
    ];

    pub fn leads(self) -> &'static [&'static str] {
        match self {
            LeadCombo::Two => &["I", "II"],
            LeadCombo::Three => &["I", "II", "V2"],
            LeadCombo::Four => &["I", "II", "III", "V2"],
            LeadCombo::Six => &["I", "II", "III", "aVR", "aVL", "aVF"],
            LeadCombo::Twelve => &STANDARD_LEADS,
        }
    }

    pub fn count(self) -> usize {
        self.leads().len()
    }

    pub fn lead_names(self) -> Vec<String> {
        self.leads().iter().map(|s| s.to_string()).collect()
    }
}

impl TryFrom<usize> for LeadCombo {
    type Error = Error;

    fn try_from(k: usize) -> Result<Self> {
        match k {
            2 => Ok(LeadCombo::Two),
            3 => Ok(LeadCombo::Three),
            4 => Ok(LeadCombo::Four),
            6 => Ok(LeadCombo::Six),
            12 => Ok(LeadCombo::Twelve),
            _ => Err(Error::Config(format!("no {k}-lead combination; use 2, 3, 4, 6 or 12"))),
        }
    }
}

impl From<LeadCombo> for usize {
    fn from(c: LeadCombo) -> usize {
        c.count()
    }
}

impl FromStr for LeadCombo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k: usize = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("lead combination must be a number, got {s:?}")))?;
        LeadCombo::try_from(k)
    }
}

impl fmt::Display for LeadCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.count())
    }
}

/// Channels of `record` in the order of `combo`.
pub fn select_leads(record: &Record, combo: LeadCombo) -> Result<Vec<Vec<f32>>> {
    combo
        .leads()
        .iter()
        .map(|name| {
            record
                .lead(name)
                .map(<[f32]>::to_vec)
                .ok_or_else(|| Error::MissingLead(name.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twelve_lead() -> Record {
        Record {
            id: "r".into(),
            signal: (0..12).map(|i| vec![i as f32; 4]).collect(),
            sample_rate: 500.0,
            lead_names: STANDARD_LEADS.iter().map(|s| s.to_string()).collect(),
            age: Some(40.0),
            gender: Gender::Female,
            labels: vec![0, 1],
            true_labels: None,
        }
    }

    #[test]
    fn combos_match_the_standard_subsets() {
        assert_eq!(LeadCombo::Two.leads(), ["I", "II"]);
        assert_eq!(LeadCombo::Three.leads(), ["I", "II", "V2"]);
        assert_eq!(LeadCombo::Four.leads(), ["I", "II", "III", "V2"]);
        assert_eq!(LeadCombo::Six.leads(), ["I", "II", "III", "aVR", "aVL", "aVF"]);
        assert_eq!(LeadCombo::Twelve.count(), 12);
        assert!("5".parse::<LeadCombo>().is_err());
        assert_eq!("6".parse::<LeadCombo>().unwrap(), LeadCombo::Six);
    }

    #[test]
    fn selects_in_combo_order() {
        let r = twelve_lead();
        let two = select_leads(&r, LeadCombo::Two).unwrap();
        assert_eq!(two, vec![vec![0.0; 4], vec![1.0; 4]]);
        assert_eq!(select_leads(&r, LeadCombo::Twelve).unwrap(), r.signal);
        let three = select_leads(&r, LeadCombo::Three).unwrap();
        assert_eq!(three[2], vec![7.0; 4]);
    }

    #[test]
    fn missing_lead_is_reported_by_name() {
        let mut r = twelve_lead();
        r.signal.truncate(2);
        r.lead_names.truncate(2);
        match select_leads(&r, LeadCombo::Six) {
            Err(Error::MissingLead(name)) => assert_eq!(name, "III"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_catches_ragged_leads_and_bad_labels() {
        let mut r = twelve_lead();
        r.validate().unwrap();
        r.signal[3].push(0.0);
        assert!(r.validate().is_err());
        let mut r = twelve_lead();
        r.labels[0] = 2;
        assert!(r.validate().is_err());
        let mut r = twelve_lead();
        r.sample_rate = 0.0;
        assert!(r.validate().is_err());
    }
}
