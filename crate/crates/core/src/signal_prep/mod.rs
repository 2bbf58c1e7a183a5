//! Turning raw multichannel recordings into fixed-shape model inputs.

mod dataset;
mod record;
mod transform;
mod wide;

pub use dataset::{prepare_record, read_dataset, write_dataset, PreparedSample, PreparedSet, RecordMeta, RECORDS_FILE};
pub use record::{select_leads, Gender, LeadCombo, Record, STANDARD_LEADS};
pub use transform::{crop_pad, crop_pad_at, crop_pad_eval, minmax_normalize, resample, WindowConfig};
pub use wide::{
    detect_peaks, extract_wide_features, gender_onehot, normalize_age, rr_statistics, WideFeatures, PEAK_THRESHOLD,
    REFRACTORY_SECS,
};
