mod common;

use noisy_ecg::harness::{evaluate, generate_synthetic, stratified_kfold, welch_t, SyntheticConfig};
use noisy_ecg::model::{probabilities, Network, Prediction};
use noisy_ecg::nn::Tensor3;
use noisy_ecg::noisy_label::{coguess_noisy, fit_gmm2, manifold_mixup, refine_clean, CLEAN_CUTOFF};
use noisy_ecg::signal_prep::{crop_pad, extract_wide_features, minmax_normalize, resample, Gender, Record, WindowConfig};
use noisy_ecg::swa_ensemble::{average_probabilities, EnsembleSet, SwaAccumulator};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{randn, tiny_model};

fn losses() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..5.0, 2..200).prop_filter("needs two distinct losses", |v| {
        v.iter().any(|&x| x != v[0])
    })
}

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

fn bits(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, n)
}

fn bounded_by(out: &[f64], a: &[f64], b: &[f64]) -> bool {
    out.iter()
        .zip(a.iter().zip(b))
        .all(|(&o, (&x, &y))| o >= x.min(y) && o <= x.max(y))
}

fn to_f32(t: &Tensor3<f64>) -> Tensor3<f32> {
    Tensor3::from_vec(t.data().iter().map(|&v| v as f32).collect(), t.shape()).unwrap()
}

fn as_f64(v: &[u8]) -> Vec<f64> {
    v.iter().map(|&b| f64::from(b)).collect()
}

proptest! {
    #[test]
    fn em_likelihood_never_drops(l in losses()) {
        let p = fit_gmm2(&l, 10).unwrap();
        prop_assert_eq!(p.log_likelihood.len(), 11);
        for w in p.log_likelihood.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{:?}", p.log_likelihood);
        }
    }

    #[test]
    fn posterior_is_bounded_and_monotone_in_loss(l in losses()) {
        let p = fit_gmm2(&l, 10).unwrap();
        prop_assert!(p.gmm.clean.mean <= p.gmm.noisy.mean);
        prop_assert!(p.gmm.clean.variance > 0.0 && p.gmm.noisy.variance > 0.0);
        prop_assert!((p.gmm.clean.weight + p.gmm.noisy.weight - 1.0).abs() < 1e-12);
        let mut order: Vec<usize> = (0..l.len()).collect();
        order.sort_by(|&a, &b| l[a].total_cmp(&l[b]));
        for w in order.windows(2) {
            prop_assert!(p.lambda_gmm[w[0]] >= p.lambda_gmm[w[1]] || l[w[0]] == l[w[1]]);
        }
        for (lam, clean) in p.lambda_gmm.iter().zip(&p.is_clean) {
            prop_assert!((0.0..=1.0).contains(lam));
            prop_assert_eq!(*clean, *lam >= CLEAN_CUTOFF);
        }
    }

    #[test]
    fn refinement_stays_between_label_and_prediction(
        (y, p, q) in (1usize..30).prop_flat_map(|n| (bits(n), unit_vec(n), unit_vec(n))),
        lam in 0.0f64..=1.0,
    ) {
        let y64 = as_f64(&y);
        let r = refine_clean(&y, &p, lam);
        prop_assert!(bounded_by(&r, &y64, &p));
        let g = coguess_noisy(&p, &q, &y, lam);
        let mean: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a + b) / 2.0).collect();
        prop_assert!(bounded_by(&g, &y64, &mean));
        prop_assert!(r.iter().chain(&g).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn refinement_endpoints_are_exact(
        (y, p, q) in (1usize..30).prop_flat_map(|n| (bits(n), unit_vec(n), unit_vec(n))),
    ) {
        prop_assert_eq!(refine_clean(&y, &p, 1.0), as_f64(&y));
        prop_assert_eq!(refine_clean(&y, &p, 0.0), p.clone());
        prop_assert_eq!(coguess_noisy(&p, &q, &y, 0.0), as_f64(&y));
    }

    #[test]
    fn mixup_endpoints_are_bit_exact_and_interior_is_convex(
        (h1, h2, u1, u2) in (1usize..40, 1usize..10).prop_flat_map(|(d, n)| (
            prop::collection::vec(-1e3f64..1e3, d),
            prop::collection::vec(-1e3f64..1e3, d),
            unit_vec(n),
            unit_vec(n),
        )),
        lam in 0.0f64..=1.0,
    ) {
        let (h, u) = manifold_mixup(&h1, &h2, &u1, &u2, 1.0);
        prop_assert_eq!((&h, &u), (&h1, &u1));
        let (h, u) = manifold_mixup(&h1, &h2, &u1, &u2, 0.0);
        prop_assert_eq!((&h, &u), (&h2, &u2));
        let (h, u) = manifold_mixup(&h1, &h2, &u1, &u2, lam);
        prop_assert!(bounded_by(&h, &h1, &h2));
        prop_assert!(bounded_by(&u, &u1, &u2));
    }

    #[test]
    fn ensemble_mean_is_bounded_and_order_free(
        each in prop::collection::vec(prop::collection::vec(unit_vec(5), 3), 4),
        perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let avg = average_probabilities(&each);
        let shuffled: Vec<Vec<Vec<f64>>> = perm.iter().map(|&i| each[i].clone()).collect();
        let other = average_probabilities(&shuffled);
        for i in 0..3 {
            for k in 0..5 {
                let m: Vec<f64> = each.iter().map(|e| e[i][k]).collect();
                let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(avg[i][k] >= lo && avg[i][k] <= hi);
                prop_assert!((avg[i][k] - other[i][k]).abs() <= 4.0 * f64::EPSILON);
                let naive = m.iter().sum::<f64>() / 4.0;
                prop_assert!((avg[i][k] - naive).abs() <= 4.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn folds_partition_every_sample(
        labels in (10usize..120, 1usize..6).prop_flat_map(|(n, l)| prop::collection::vec(bits(l), n)),
        k in 2usize..10,
        seed in any::<u64>(),
    ) {
        let plan = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(plan.folds.len(), k);
        let mut seen: Vec<usize> = plan.folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..labels.len()).collect::<Vec<_>>());
        prop_assert_eq!(&plan, &stratified_kfold(&labels, k, seed).unwrap());
    }

    #[test]
    fn single_label_folds_are_proportional(
        labels in (10usize..200).prop_flat_map(|n| prop::collection::vec(bits(1), n)),
        k in 2usize..10,
        seed in any::<u64>(),
    ) {
        let plan = stratified_kfold(&labels, k, seed).unwrap();
        let total = labels.iter().filter(|y| y[0] == 1).count() as f64;
        let n = labels.len() as f64;
        for fold in &plan.folds {
            let pos = fold.iter().filter(|&&i| labels[i][0] == 1).count() as f64;
            prop_assert!((pos - total / k as f64).abs() < 1.0, "{pos} vs {}", total / k as f64);
            prop_assert!((fold.len() as f64 - n / k as f64).abs() < 1.0);
        }
    }

    #[test]
    fn evaluation_ignores_sample_order(
        (truth, pred) in (2usize..60, 1usize..5).prop_flat_map(|(n, l)| (
            prop::collection::vec(bits(l), n),
            prop::collection::vec(unit_vec(l), n),
        )),
        seed in any::<u64>(),
    ) {
        let ids: Vec<String> = (0..truth.len()).map(|i| format!("s{i}")).collect();
        let report = evaluate(&ids, &pred, &ids, &truth, 0.3).unwrap();
        let mut perm: Vec<usize> = (0..truth.len()).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let p_ids: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
        let p_pred: Vec<Vec<f64>> = perm.iter().map(|&i| pred[i].clone()).collect();
        let permuted = evaluate(&p_ids, &p_pred, &ids, &truth, 0.3).unwrap();
        prop_assert_eq!(&report, &permuted);
        let macro_f1 = report.per_label.iter().map(|m| m.f1).sum::<f64>() / report.per_label.len() as f64;
        prop_assert!((report.macro_f1 - macro_f1).abs() < 1e-12);
        for m in &report.per_label {
            for v in [m.precision, m.recall, m.f1].into_iter().chain(m.auroc) {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn welch_p_is_symmetric(
        a in prop::collection::vec(-10.0f64..10.0, 2..12),
        b in prop::collection::vec(-10.0f64..10.0, 2..12),
    ) {
        let ab = welch_t(&a, &b);
        let ba = welch_t(&b, &a);
        if let (Ok(ab), Ok(ba)) = (ab, ba) {
            prop_assert_eq!(ab.p, ba.p);
            prop_assert_eq!(ab.t, -ba.t);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }
    }

    #[test]
    fn probabilities_are_open_unit_and_monotone(mut z in prop::collection::vec(-30.0f64..30.0, 1..20)) {
        z.sort_by(f64::total_cmp);
        let p = Prediction::from_logits(&z, 0.3);
        prop_assert!(p.probabilities.iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert!(p.probabilities.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(p.decisions.iter().zip(&p.probabilities).all(|(&d, &v)| d == (v >= 0.3)));
    }

    #[test]
    fn normalize_is_idempotent(lead in prop::collection::vec(-100.0f32..100.0, 2..300)) {
        let once = minmax_normalize(&lead);
        let twice = minmax_normalize(&once);
        prop_assert!(once.iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() <= 1e-6));
    }

    #[test]
    fn crop_pad_has_fixed_shape(len in 1usize..2500, leads in 1usize..4, seed in any::<u64>()) {
        let cfg = WindowConfig { rate: 100.0, ..WindowConfig::default() };
        let signal = vec![vec![0.5f32; len]; leads];
        let out = crop_pad(&signal, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(out.len(), leads);
        prop_assert!(out.iter().all(|l| l.len() == 1500));
    }

    #[test]
    fn resample_keeps_constants(c in -50.0f32..50.0, len in 2usize..400, src in 50.0f64..1000.0, dst in 50.0f64..1000.0) {
        let out = resample(&[vec![c; len]], src, dst).unwrap();
        prop_assert!(out[0].iter().all(|&v| v == c));
    }

    #[test]
    fn wide_features_are_finite(
        signal in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 200..800), 2),
        age in prop::option::of(0.0f64..120.0),
    ) {
        let n = signal[0].len();
        let record = Record {
            id: "r".into(),
            signal: signal.into_iter().map(|mut l| { l.resize(n, 0.0); l }).collect(),
            sample_rate: 100.0,
            lead_names: vec!["I".into(), "II".into()],
            age,
            gender: Gender::Unknown,
            labels: vec![0, 1],
            true_labels: None,
        };
        prop_assert!(extract_wide_features(&record).to_array().iter().all(|v| v.is_finite()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn swa_mean_matches_brute_force(k in 1usize..=13, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::<f32>::build(&tiny_model(3), 2, 7).unwrap();
        let mut acc = SwaAccumulator::new(13);
        let mut sums: Vec<Vec<f64>> = net.store().params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        for _ in 0..k {
            for p in net.store_mut().params_mut() {
                p.value.iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
            }
            for (s, p) in sums.iter_mut().zip(net.store().params()) {
                s.iter_mut().zip(&p.value).for_each(|(s, &v)| *s += f64::from(v));
            }
            acc.absorb(&net).unwrap();
        }
        prop_assert_eq!(acc.count(), k);
        for (m, s) in acc.mean().iter().zip(&sums) {
            for (&a, &b) in m.iter().zip(s) {
                let brute = b / k as f64;
                prop_assert!((a - brute).abs() <= 1e-6 * brute.abs().max(1e-6), "{a} vs {brute}");
            }
        }
    }

    #[test]
    fn four_identical_members_predict_like_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::<f32>::build(&tiny_model(3), 2, seed).unwrap();
        let x = to_f32(&randn(&mut rng, [5, 2, 64]));
        let w = to_f32(&randn(&mut rng, [5, 9, 1]));
        let single = probabilities(&mut net, &x, &w, 64).unwrap();
        let mut ens = EnsembleSet::new([net.clone(), net.clone(), net.clone(), net]).unwrap();
        prop_assert_eq!(ens.probabilities(&x, &w, 64).unwrap(), single);
    }
}

#[test]
fn flip_rate_converges_to_noise_rate() {
    for rho in [0.05, 0.2, 0.4, 0.6] {
        let cfg = SyntheticConfig {
            n_samples: 500,
            n_labels: 24,
            n_leads: 2,
            sample_rate: 100.0,
            min_secs: 1.0,
            max_secs: 2.0,
            noise_rate: rho,
            seed: 11,
            ..SyntheticConfig::default()
        };
        let records = generate_synthetic(&cfg).unwrap();
        let n_bits = (cfg.n_samples * cfg.n_labels) as f64;
        let flips = records
            .iter()
            .flat_map(|r| r.labels.iter().zip(r.true_labels.as_ref().unwrap()))
            .filter(|(a, b)| a != b)
            .count() as f64;
        let sigma = (rho * (1.0 - rho) / n_bits).sqrt();
        let rate = flips / n_bits;
        assert!(n_bits >= 1e4);
        assert!((rate - rho).abs() <= 3.0 * sigma, "rho {rho}: rate {rate}, 3 sigma {}", 3.0 * sigma);
    }
}

#[test]
fn tensor_shapes_stay_consistent() {
    let t = Tensor3::<f64>::zeros(2, 3, 4);
    assert_eq!(t.data().len(), 24);
    assert!(Tensor3::from_vec(vec![0.0f64; 23], [2, 3, 4]).is_err());
}
