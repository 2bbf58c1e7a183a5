mod common;

use noisy_ecg::model::{probabilities, Network};
use noisy_ecg::nn::Tensor3;
use noisy_ecg::noisy_label::{
    refresh_batches, train, train_baseline, train_with, CoTrainState, Phase, RunWriter, TrainConfig, METRICS_FILE,
};
use noisy_ecg::swa_ensemble::{finalize_swa, EnsembleSet, SwaAccumulator, MEMBER_FILES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{randn, tiny_model, tiny_set, tiny_train};

fn weights(net: &Network<f32>) -> Vec<Vec<f32>> {
    net.store().params().iter().map(|p| p.value.clone()).collect()
}

fn buffers(net: &Network<f32>) -> Vec<Vec<f32>> {
    net.store().buffers().iter().map(|b| b.value.clone()).collect()
}

fn to_f32(t: &Tensor3<f64>) -> Tensor3<f32> {
    Tensor3::from_vec(t.data().iter().map(|&v| v as f32).collect(), t.shape()).unwrap()
}

#[test]
fn warmup_only_run_equals_the_baseline_trainer() {
    let set = tiny_set(24, 0.2, 1);
    let cfg = tiny_train(2, 2);
    let state = train(&cfg, &set).unwrap();
    assert!(state.history.iter().all(|m| m.phase == Phase::Warmup));
    assert!(state.partitions.iter().all(Option::is_none));
    let baseline = train_baseline(&cfg, &set).unwrap();
    assert_eq!(weights(&state.nets[0]), weights(&baseline));
    assert_eq!(buffers(&state.nets[0]), buffers(&baseline));
    assert_ne!(weights(&state.nets[0]), weights(&state.nets[1]));
}

#[test]
fn fixed_seed_gives_identical_checkpoints() {
    let set = tiny_set(24, 0.3, 2);
    let cfg = tiny_train(4, 1);
    let a = train(&cfg, &set).unwrap();
    let b = train(&cfg, &set).unwrap();
    for m in 0..2 {
        assert_eq!(weights(&a.nets[m]), weights(&b.nets[m]));
        assert_eq!(buffers(&a.nets[m]), buffers(&b.nets[m]));
    }
    assert_eq!(a.history, b.history);
    let reseeded = TrainConfig { seed: 4, ..cfg };
    let other = train(&reseeded, &set).unwrap();
    assert_ne!(weights(&a.nets[0]), weights(&other.nets[0]));
}

#[test]
fn each_network_consumes_the_partners_previous_partition() {
    let set = tiny_set(24, 0.4, 3);
    let cfg = tiny_train(4, 1);
    let mut seen = Vec::new();
    train_with(&cfg, &set, |state: &CoTrainState| {
        let last = state.history.last().unwrap();
        if last.phase == Phase::Divide {
            assert_eq!(state.partition_epoch + 1, state.epoch);
            for m in 0..2 {
                let produced_by_partner = state.partitions[1 - m].as_ref().unwrap();
                assert_eq!(last.nets[m].clean_fraction, Some(produced_by_partner.clean_fraction()));
                assert!(last.nets[m].loss.is_finite());
            }
        }
        seen.push(last.phase);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, [Phase::Warmup, Phase::Divide, Phase::Divide, Phase::Divide]);
}

#[test]
fn swa_covers_the_trailing_window_and_ensemble_has_four_members() {
    let set = tiny_set(24, 0.0, 4);
    let cfg = tiny_train(3, 1);
    let state = train(&cfg, &set).unwrap();
    assert!(state.swa.iter().all(|acc| acc.count() == cfg.swa_epochs));
    let mut ens = state.ensemble(&cfg, &set).unwrap();
    let idx: Vec<usize> = (0..set.len()).collect();
    let (x, w) = set.eval_batch(&idx);
    let p = ens.probabilities(&x, &w, 16).unwrap();
    assert_eq!(p.len(), set.len());
    let each: Vec<Vec<Vec<f64>>> = ens
        .members
        .iter_mut()
        .map(|n| probabilities(n, &x, &w, 16).unwrap())
        .collect();
    for i in 0..set.len() {
        for k in 0..set.n_labels {
            let lo = each.iter().map(|e| e[i][k]).fold(f64::INFINITY, f64::min);
            let hi = each.iter().map(|e| e[i][k]).fold(f64::NEG_INFINITY, f64::max);
            assert!(p[i][k] >= lo && p[i][k] <= hi);
        }
    }
}

#[test]
fn run_directory_holds_checkpoints_partitions_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let set = tiny_set(24, 0.4, 5);
    let cfg = tiny_train(3, 1);
    let writer = RunWriter::create(dir.path(), &set).unwrap();
    let state = train_with(&cfg, &set, |s| writer.record(s)).unwrap();
    for e in 1..=3 {
        for m in 1..=2 {
            assert!(dir.path().join(format!("epochs/epoch{e:03}_net{m}.ckpt")).is_file());
        }
    }
    for e in 2..=3 {
        for m in 1..=2 {
            let text = std::fs::read_to_string(dir.path().join(format!("partitions/epoch{e:03}_from_net{m}.jsonl"))).unwrap();
            assert_eq!(text.lines().count(), set.len());
            let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
            assert_eq!(first["id"], set.samples[0].id.as_str());
        }
    }
    assert!(!dir.path().join("partitions/epoch001_from_net1.jsonl").exists());
    let metrics = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    state.ensemble(&cfg, &set).unwrap().save_run(dir.path(), &set.combo.lead_names()).unwrap();
    assert!(MEMBER_FILES.iter().all(|f| dir.path().join(f).is_file()));
    let (mut loaded, meta) = EnsembleSet::<f32>::load_run(dir.path()).unwrap();
    assert_eq!(meta.leads, set.combo.lead_names());
    let (x, w) = set.eval_batch(&[0, 1, 2]);
    let mut fresh = state.ensemble(&cfg, &set).unwrap();
    assert_eq!(
        loaded.probabilities(&x, &w, 16).unwrap(),
        fresh.probabilities(&x, &w, 16).unwrap()
    );
}

#[test]
fn averaging_one_snapshot_reproduces_it_after_refresh() {
    let set = tiny_set(24, 0.0, 6);
    let cfg = tiny_train(1, 1);
    let batches = refresh_batches(&set, &cfg);
    let mut net = Network::<f32>::build(&cfg.model(set.n_labels).unwrap(), 2, 8).unwrap();
    let mut acc = SwaAccumulator::new(1);
    acc.absorb(&net).unwrap();
    let mut averaged = finalize_swa(&acc, &batches).unwrap();
    net.refresh_batch_norm(batches.iter().map(|(x, w)| (x, w))).unwrap();
    let (x, w) = set.eval_batch(&[0, 3, 5, 7]);
    assert_eq!(
        probabilities(&mut averaged, &x, &w, 16).unwrap(),
        probabilities(&mut net, &x, &w, 16).unwrap()
    );
}

#[test]
fn averaging_two_snapshots_matches_the_midpoint_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = tiny_model(3);
    let a = Network::<f64>::build(&model, 2, 1).unwrap();
    let b = Network::<f64>::build(&model, 2, 2).unwrap();
    let mut acc = SwaAccumulator::new(2);
    acc.absorb(&a).unwrap();
    acc.absorb(&b).unwrap();
    let batches: Vec<_> = (0..3).map(|_| (randn(&mut rng, [6, 2, 40]), randn(&mut rng, [6, 9, 1]))).collect();
    let mut averaged = finalize_swa(&acc, &batches).unwrap();

    let mut mid = a.clone();
    for (p, q) in mid.store_mut().params_mut().iter_mut().zip(b.store().params()) {
        p.value.iter_mut().zip(&q.value).for_each(|(v, &u)| *v = (*v + u) / 2.0);
    }
    mid.refresh_batch_norm(batches.iter().map(|(x, w)| (x, w))).unwrap();
    let (x, w) = (randn(&mut rng, [4, 2, 40]), randn(&mut rng, [4, 9, 1]));
    let got = probabilities(&mut averaged, &x, &w, 16).unwrap();
    let want = probabilities(&mut mid, &x, &w, 16).unwrap();
    for (g, e) in got.iter().flatten().zip(want.iter().flatten()) {
        assert!((g - e).abs() < 1e-12, "{g} vs {e}");
    }
}

#[test]
fn identical_members_match_single_model_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut net = Network::<f32>::build(&tiny_model(5), 2, 3).unwrap();
    let x = to_f32(&randn(&mut rng, [7, 2, 60]));
    let w = to_f32(&randn(&mut rng, [7, 9, 1]));
    let single = probabilities(&mut net, &x, &w, 64).unwrap();
    let mut ens = EnsembleSet::new([net.clone(), net.clone(), net.clone(), net]).unwrap();
    assert_eq!(ens.probabilities(&x, &w, 64).unwrap(), single);
}

#[test]
fn datasets_smaller_than_a_batch_are_rejected() {
    let set = tiny_set(6, 0.0, 7);
    assert!(train(&tiny_train(1, 1), &set).is_err());
    assert!(train_baseline(&tiny_train(1, 1), &set).is_err());
}
