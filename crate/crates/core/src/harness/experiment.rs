use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result};
use crate::model::probabilities;
use crate::noisy_label::{train, train_baseline, TrainConfig, CLEAN_CUTOFF};
use crate::signal_prep::{LeadCombo, PreparedSet, WindowConfig};

use super::folds::stratified_kfold;
use super::metrics::{evaluate, EvalReport};
use super::synthetic::{generate_synthetic, SyntheticConfig};
use super::welch::{welch_t, WelchResult};

/// Cross-validation protocol of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub folds: usize,
    /// Independent repetitions; repetition `r` offsets every seed by `r`.
    pub seeds: usize,
    pub lead_combos: Vec<LeadCombo>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            folds: 10,
            seeds: 1,
            lead_combos: vec![LeadCombo::Twelve],
        }
    }
}

/// The single configuration file: data generation, windowing, training and protocol.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub synthetic: SyntheticConfig,
    pub window: WindowConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentSettings,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).at(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub macro_f1: f64,
    pub macro_auroc: Option<f64>,
    pub per_label_f1: Vec<f64>,
}

impl From<&EvalReport> for MethodScore {
    fn from(r: &EvalReport) -> Self {
        MethodScore {
            macro_f1: r.macro_f1,
            macro_auroc: r.macro_auroc,
            per_label_f1: r.per_label.iter().map(|m| m.f1).collect(),
        }
    }
}

/// Scores of both methods on one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub leads: LeadCombo,
    pub seed: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub baseline: MethodScore,
    pub proposed: MethodScore,
    /// Per network, fraction of training samples its final mixture marks clean.
    pub clean_fraction: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let std = if x.len() > 1 {
            (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboReport {
    pub leads: LeadCombo,
    pub folds: Vec<FoldScore>,
    /// Compared units: per-seed fold means with several seeds, otherwise single folds.
    pub baseline_units: Vec<f64>,
    pub proposed_units: Vec<f64>,
    pub baseline: Summary,
    pub proposed: Summary,
    pub welch: Option<WelchResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub combos: Vec<ComboReport>,
}

/// Sigmoid probabilities of every sample of `set`, produced chunk by chunk.
pub fn set_probabilities<F>(set: &PreparedSet, chunk: usize, mut f: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&crate::nn::Tensor3<f32>, &crate::nn::Tensor3<f32>) -> Result<Vec<Vec<f64>>>,
{
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for part in idx.chunks(chunk.max(1)) {
        let (x, w) = set.eval_batch(part);
        out.extend(f(&x, &w)?);
    }
    Ok(out)
}

fn ids(set: &PreparedSet) -> Vec<String> {
    set.samples.iter().map(|s| s.id.clone()).collect()
}

/// Trains the baseline and the noisy-label pipeline on one split and scores
/// both against the reference labels of the held-out part.
pub fn run_fold(config: &TrainConfig, train_set: &PreparedSet, test_set: &PreparedSet) -> Result<(MethodScore, MethodScore, [f64; 2])> {
    let chunk = config.eval_chunk;
    let truth = test_set.reference_labels();
    let test_ids = ids(test_set);

    let mut baseline = train_baseline(config, train_set)?;
    let pb = set_probabilities(test_set, chunk, |x, w| probabilities(&mut baseline, x, w, chunk))?;
    let rb = evaluate(&test_ids, &pb, &test_ids, &truth, config.threshold)?;

    let state = train(config, train_set)?;
    let parts = state.current_partitions(config, train_set)?;
    let clean = parts.map(|p| p.lambda_gmm.iter().filter(|&&l| l >= CLEAN_CUTOFF).count() as f64 / p.lambda_gmm.len() as f64);
    let mut ensemble = state.ensemble(config, train_set)?;
    let pp = set_probabilities(test_set, chunk, |x, w| ensemble.probabilities(x, w, chunk))?;
    let rp = evaluate(&test_ids, &pp, &test_ids, &truth, config.threshold)?;
    Ok(((&rb).into(), (&rp).into(), clean))
}

fn score_file_name(s: &FoldScore) -> String {
    format!("leads{}_seed{}_fold{}.json", s.leads.count(), s.seed, s.fold)
}

/// Baseline against noisy-label pipeline over every lead combination, repetition
/// and fold. With `out`, per-fold score files, `report.json` and `report.txt`
/// are written there.
pub fn run_experiment(cfg: &PipelineConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    cfg.synthetic.validate()?;
    cfg.window.validate()?;
    cfg.train.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir.join("scores")).at(dir)?;
    }
    let mut combos = Vec::new();
    for &combo in &cfg.experiment.lead_combos {
        let mut folds = Vec::new();
        for r in 0..cfg.experiment.seeds {
            let synth = SyntheticConfig {
                seed: cfg.synthetic.seed + r as u64,
                ..cfg.synthetic.clone()
            };
            let records: Vec<_> = generate_synthetic(&synth)?.into_iter().map(|r| (r, None)).collect();
            let set = PreparedSet::from_records(&records, combo, cfg.window)?;
            let plan = stratified_kfold(&set.labels(), cfg.experiment.folds, synth.seed)?;
            let train_cfg = TrainConfig {
                seed: cfg.train.seed + r as u64,
                ..cfg.train.clone()
            };
            for f in 0..plan.k {
                let started = Instant::now();
                let train_set = set.subset(&plan.train_indices(f));
                let test_set = set.subset(&plan.test_indices(f));
                let (baseline, proposed, clean_fraction) = run_fold(&train_cfg, &train_set, &test_set)?;
                let score = FoldScore {
                    leads: combo,
                    seed: r,
                    fold: f,
                    n_train: train_set.len(),
                    n_test: test_set.len(),
                    baseline,
                    proposed,
                    clean_fraction,
                };
                log::info!(
                    "{} leads, seed {r}, fold {f}: baseline {:.4}, proposed {:.4}, clean {:.3}/{:.3} ({:.0?})",
                    combo.count(),
                    score.baseline.macro_f1,
                    score.proposed.macro_f1,
                    clean_fraction[0],
                    clean_fraction[1],
                    started.elapsed()
                );
                if let Some(dir) = out {
                    let path = dir.join("scores").join(score_file_name(&score));
                    fs::write(&path, serde_json::to_string_pretty(&score)? + "\n").at(&path)?;
                }
                folds.push(score);
            }
        }
        combos.push(summarize(combo, folds, cfg.experiment.seeds));
    }
    let report = ExperimentReport { combos };
    if let Some(dir) = out {
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").at(&path)?;
        let path = dir.join("report.txt");
        fs::write(&path, render_report(&report)).at(&path)?;
    }
    Ok(report)
}

fn summarize(leads: LeadCombo, folds: Vec<FoldScore>, seeds: usize) -> ComboReport {
    let units = |pick: fn(&FoldScore) -> f64| -> Vec<f64> {
        if seeds > 1 {
            (0..seeds)
                .map(|r| {
                    let v: Vec<f64> = folds.iter().filter(|s| s.seed == r).map(pick).collect();
                    v.iter().sum::<f64>() / v.len() as f64
                })
                .collect()
        } else {
            folds.iter().map(pick).collect()
        }
    };
    let baseline_units = units(|s| s.baseline.macro_f1);
    let proposed_units = units(|s| s.proposed.macro_f1);
    let welch = welch_t(&proposed_units, &baseline_units).ok();
    ComboReport {
        leads,
        baseline: Summary::of(&baseline_units),
        proposed: Summary::of(&proposed_units),
        baseline_units,
        proposed_units,
        welch,
        folds,
    }
}

/// Human-readable summary table.
pub fn render_report(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# macro-F1 on reference labels (mean ± std over compared units)");
    let _ = writeln!(s, "leads  baseline         proposed         rel.gain  welch_t   df      p");
    for c in &report.combos {
        let gain = (c.proposed.mean - c.baseline.mean) / c.baseline.mean.abs().max(1e-12) * 100.0;
        let (t, df, p) = c.welch.map_or((f64::NAN, f64::NAN, f64::NAN), |w| (w.t, w.df, w.p));
        let _ = writeln!(
            s,
            "{:<6} {:.4} ± {:.4}  {:.4} ± {:.4}  {:>+7.2}%  {:>8.3}  {:>6.2}  {:.4}",
            c.leads.count(),
            c.baseline.mean,
            c.baseline.std,
            c.proposed.mean,
            c.proposed.std,
            gain,
            t,
            df,
            p
        );
    }
    let _ = writeln!(s, "\n# per fold");
    let _ = writeln!(s, "leads  seed  fold  baseline  proposed  clean_net1  clean_net2");
    for c in &report.combos {
        for f in &c.folds {
            let _ = writeln!(
                s,
                "{:<6} {:<5} {:<5} {:.4}    {:.4}    {:.4}      {:.4}",
                f.leads.count(),
                f.seed,
                f.fold,
                f.baseline.macro_f1,
                f.proposed.macro_f1,
                f.clean_fraction[0],
                f.clean_fraction[1]
            );
        }
    }
    s
}
