#![allow(dead_code)]

pub mod grad_suite;

use noisy_ecg::harness::{generate_synthetic, SyntheticConfig};
use noisy_ecg::model::{ModelConfig, StageOp, StageSpec};
use noisy_ecg::noisy_label::TrainConfig;
use noisy_ecg::signal_prep::{LeadCombo, PreparedSet, WindowConfig};
use noisy_ecg::nn::{ParameterStore, Tensor3};
use rand::Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-5;
pub const MAX_REL_ERR: f64 = 1e-4;

pub fn randn<R: Rng>(rng: &mut R, shape: [usize; 3]) -> Tensor3<f64> {
    let n = shape.iter().product();
    Tensor3::from_vec((0..n).map(|_| rng.sample(StandardNormal)).collect(), shape).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Forward (and, given an output gradient, backward) of the function under test.
/// Returns the output and the gradients of every input.
pub type Run<'a> = dyn FnMut(&mut ParameterStore<f64>, &[Tensor3<f64>], Option<&Tensor3<f64>>) -> (Tensor3<f64>, Vec<Tensor3<f64>>) + 'a;

#[derive(Debug)]
pub struct GradReport {
    pub max_rel: f64,
    pub checked: usize,
    /// Probes where the loss is not smooth within the stencil (an argmax switched).
    pub skipped: usize,
    pub worst: String,
}

/// Compares analytic gradients of `Σ proj ⊙ f(params, inputs)` against a
/// four-point central difference. With `scalar`, `f` must return a single
/// value and `proj` is 1. At most `budget` scalars are probed per tensor.
pub fn check_gradients<R: Rng>(
    rng: &mut R,
    store: &mut ParameterStore<f64>,
    mut inputs: Vec<Tensor3<f64>>,
    run: &mut Run<'_>,
    scalar: bool,
    budget: usize,
) -> GradReport {
    let (y0, _) = run(store, &inputs, None);
    let proj = if scalar {
        assert_eq!(y0.data().len(), 1);
        Tensor3::from_vec(vec![1.0], y0.shape()).unwrap()
    } else {
        randn(rng, y0.shape())
    };
    store.zero_grad();
    let (_, d_inputs) = run(store, &inputs, Some(&proj));
    let param_grads: Vec<Vec<f64>> = store.params().iter().map(|p| p.grad.clone()).collect();

    let loss = |store: &mut ParameterStore<f64>, inputs: &[Tensor3<f64>], run: &mut Run<'_>| -> f64 {
        let (y, _) = run(store, inputs, None);
        y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
    };
    // Retries smaller steps while estimates at h and h/2 disagree, i.e. the
    // stencil straddles a kink; None when every step does.
    let stencil = |f: &mut dyn FnMut(f64) -> f64| -> Option<f64> {
        let mut at = |h: f64| (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
        [FD_STEP, FD_STEP / 10.0, FD_STEP / 100.0].into_iter().find_map(|h| {
            let coarse = at(h);
            let fine = at(h / 2.0);
            (rel_err(coarse, fine) < MAX_REL_ERR / 10.0).then_some(fine)
        })
    };
    let pick = |rng: &mut R, n: usize| -> Vec<usize> {
        if n <= budget {
            (0..n).collect()
        } else {
            (0..budget).map(|_| rng.random_range(0..n)).collect()
        }
    };

    let mut report = GradReport {
        max_rel: 0.0,
        checked: 0,
        skipped: 0,
        worst: String::new(),
    };
    let note = |report: &mut GradReport, what: String, a: f64, n: Option<f64>| {
        let Some(n) = n else {
            report.skipped += 1;
            return;
        };
        let e = rel_err(a, n);
        report.checked += 1;
        if e > report.max_rel || report.worst.is_empty() {
            report.max_rel = report.max_rel.max(e);
            if e >= report.max_rel {
                report.worst = format!("{what}: analytic {a:e}, numeric {n:e}");
            }
        }
    };

    for p in 0..store.params().len() {
        let n = store.params()[p].value.len();
        for i in pick(rng, n) {
            let orig = store.params()[p].value[i];
            let numeric = stencil(&mut |d| {
                store.params_mut()[p].value[i] = orig + d;
                loss(store, &inputs, run)
            });
            store.params_mut()[p].value[i] = orig;
            let name = store.params()[p].name.clone();
            note(&mut report, format!("{name}[{i}]"), param_grads[p][i], numeric);
        }
    }
    for (k, dx) in d_inputs.iter().enumerate() {
        for i in pick(rng, dx.data().len()) {
            let orig = inputs[k].data()[i];
            let numeric = stencil(&mut |d| {
                inputs[k].data_mut()[i] = orig + d;
                loss(store, &inputs, run)
            });
            inputs[k].data_mut()[i] = orig;
            note(&mut report, format!("input{k}[{i}]"), dx.data()[i], numeric);
        }
    }
    report
}

/// A four-stage network small enough for exhaustive gradient probing.
pub fn tiny_model(n_labels: usize) -> ModelConfig {
    ModelConfig {
        stages: vec![
            StageSpec {
                op: StageOp::Conv,
                kernel: 3,
                stride: 2,
                out_channels: 4,
                layers: 1,
            },
            StageSpec {
                op: StageOp::FusedMbConv { expand: 2 },
                kernel: 3,
                stride: 2,
                out_channels: 4,
                layers: 2,
            },
            StageSpec {
                op: StageOp::FusedMbConv { expand: 1 },
                kernel: 5,
                stride: 2,
                out_channels: 8,
                layers: 1,
            },
            StageSpec {
                op: StageOp::Conv,
                kernel: 1,
                stride: 1,
                out_channels: 6,
                layers: 1,
            },
        ],
        n_labels,
        wide_in: 9,
        wide_dim: 3,
        wide_layers: 2,
        mlp_hidden: 5,
    }
}

/// Short two-lead synthetic recordings at 50 Hz.
pub fn tiny_set(n_samples: usize, noise_rate: f64, seed: u64) -> PreparedSet {
    let cfg = SyntheticConfig {
        n_samples,
        n_labels: 3,
        n_leads: 2,
        sample_rate: 50.0,
        max_freq: 20.0,
        noise_rate,
        seed,
        ..SyntheticConfig::default()
    };
    let records: Vec<_> = generate_synthetic(&cfg).unwrap().into_iter().map(|r| (r, None)).collect();
    let window = WindowConfig {
        rate: 50.0,
        ..WindowConfig::default()
    };
    PreparedSet::from_records(&records, LeadCombo::Two, window).unwrap()
}

/// A fast schedule on the narrowest architecture.
pub fn tiny_train(epochs: usize, warmup_epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        warmup_epochs,
        swa_epochs: 2.min(epochs),
        batch_size: 8,
        baseline_batch_size: 8,
        bn_refresh_samples: 16,
        width_divisor: 8,
        eval_chunk: 16,
        seed: 3,
        ..TrainConfig::default()
    }
}
