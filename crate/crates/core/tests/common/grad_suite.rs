use noisy_ecg::model::Network;
use noisy_ecg::nn::{
    BatchNorm, Conv1d, ConvGeometry, FusedMbConv, GlobalMaxPool, Linear, Mish, Mode, ParameterStore, SqueezeExcite,
    Tensor3,
};
use noisy_ecg::noisy_label::{mixed_step, objective, MixPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_gradients, randn, tiny_model, GradReport, MAX_REL_ERR};

pub const SEEDS: u64 = 20;

/// Every primitive check with a short name, in the order they are reported.
pub const CHECKS: [(&str, fn(u64) -> GradReport); 10] = [
    ("mish", mish_layer),
    ("conv1d", conv1d_weights_and_input),
    ("batchnorm", batchnorm_training_mode),
    ("linear", linear_layer),
    ("max pool", global_max_pool),
    ("squeeze-excite", squeeze_excite),
    ("fused-mbconv", fused_mbconv_with_context),
    ("network", full_network),
    ("objective", mixed_objective_logits),
    ("mixed objective", mixed_objective_through_network),
];

/// Error message when a report breaks the tolerance or skips too many probes.
pub fn failure(r: &GradReport) -> Option<String> {
    if r.checked == 0 {
        return Some("nothing checked".into());
    }
    if r.skipped * 100 > r.checked + r.skipped {
        return Some(format!("{} of {} probes hit a kink", r.skipped, r.checked + r.skipped));
    }
    (r.max_rel >= MAX_REL_ERR).then(|| format!("max relative error {:e} at {}", r.max_rel, r.worst))
}

pub fn mish_layer(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let mut act = Mish::new();
    let x = randn(&mut rng, [2, 3, 5]).map(|v| 3.0 * v);
    
    check_gradients(&mut rng, &mut store, vec![x], &mut |_, xs, dy| {
        let y = act.forward(xs[0].clone(), dy.is_some());
        match dy {
            Some(d) => (y, vec![act.backward(d.clone()).unwrap()]),
            None => (y, vec![]),
        }
    }, false, 1000)}

pub fn conv1d_weights_and_input(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = [1, 3, 5, 7][seed as usize % 4];
    let stride = 1 + (seed as usize / 4) % 2;
    let width = rng.random_range(4..13);
    let mut store = ParameterStore::new();
    let geom = ConvGeometry::new(2, 3, kernel, stride).unwrap();
    let mut conv = Conv1d::new(&mut store, "conv", geom, &mut rng).unwrap();
    let x = randn(&mut rng, [2, 2, width]);
    
    check_gradients(&mut rng, &mut store, vec![x], &mut |s, xs, dy| {
        let y = conv.forward(s, xs[0].clone(), dy.is_some()).unwrap();
        match dy {
            Some(d) => (y, vec![conv.backward(s, d).unwrap()]),
            None => (y, vec![]),
        }
    }, false, 1000)}

pub fn batchnorm_training_mode(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let mut bn = BatchNorm::new(&mut store, "bn", 3).unwrap();
    for p in store.params_mut() {
        p.value.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
    }
    let width = 1 + seed as usize % 4;
    let x = randn(&mut rng, [3, 3, width]);
    
    check_gradients(&mut rng, &mut store, vec![x], &mut |s, xs, dy| {
        let y = bn.forward(s, xs[0].clone(), Mode::Train).unwrap();
        match dy {
            Some(d) => (y, vec![bn.backward(s, d).unwrap()]),
            None => (y, vec![]),
        }
    }, false, 1000)}

pub fn linear_layer(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let mut fc = Linear::new(&mut store, "fc", 4, 3, &mut rng).unwrap();
    let x = randn(&mut rng, [3, 4, 1]);
    
    check_gradients(&mut rng, &mut store, vec![x], &mut |s, xs, dy| {
        let y = fc.forward(s, xs[0].clone(), dy.is_some()).unwrap();
        match dy {
            Some(d) => (y, vec![fc.backward(s, d).unwrap()]),
            None => (y, vec![]),
        }
    }, false, 1000)}

pub fn global_max_pool(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let mut pool = GlobalMaxPool::new();
    let x = randn(&mut rng, [2, 3, 6]);
    
    check_gradients(&mut rng, &mut store, vec![x], &mut |_, xs, dy| {
        let y = pool.forward(&xs[0], dy.is_some()).unwrap();
        match dy {
            Some(d) => (y, vec![pool.backward(d).unwrap()]),
            None => (y, vec![]),
        }
    }, false, 1000)}

pub fn squeeze_excite(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let mut se = SqueezeExcite::new(&mut store, "se", 8, &mut rng).unwrap();
    let x = randn(&mut rng, [2, 8, 5]);
    
    check_gradients(&mut rng, &mut store, vec![x], &mut |s, xs, dy| {
        let y = se.forward(s, xs[0].clone(), dy.is_some()).unwrap();
        match dy {
            Some(d) => (y, vec![se.backward(s, d).unwrap()]),
            None => (y, vec![]),
        }
    }, false, 1000)}

pub fn fused_mbconv_with_context(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let expand = 1 + seed as usize % 2;
    let stride = 1 + (seed as usize / 2) % 2;
    let mut store = ParameterStore::new();
    let mut block = FusedMbConv::new(&mut store, "b", 4, 6, 3, stride, expand, 3, &mut rng).unwrap();
    let x = randn(&mut rng, [3, 4, 7]);
    let ctx = randn(&mut rng, [3, 3, 1]);
    
    check_gradients(&mut rng, &mut store, vec![x, ctx], &mut |s, xs, dy| {
        let y = block.forward(s, xs[0].clone(), Some(&xs[1]), Mode::Train).unwrap();
        match dy {
            Some(d) => {
                let (dx, dctx) = block.backward(s, d).unwrap();
                (y, vec![dx, dctx.unwrap()])
            }
            None => (y, vec![]),
        }
    }, false, 1000)}

fn take_store(net: &mut Network<f64>) -> ParameterStore<f64> {
    std::mem::take(net.store_mut())
}

pub fn full_network(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::build(&tiny_model(3), 2, seed).unwrap();
    let mut store = take_store(&mut net);
    let x = randn(&mut rng, [3, 2, 24]);
    let wide = randn(&mut rng, [3, 9, 1]);
    let r = check_gradients(&mut rng, &mut store, vec![x, wide], &mut |s, xs, dy| {
        std::mem::swap(net.store_mut(), s);
        let y = net.forward(&xs[0], &xs[1], Mode::Train).unwrap();
        if let Some(d) = dy {
            net.backward(d).unwrap();
        }
        std::mem::swap(net.store_mut(), s);
        (y, Vec::new())
    }, false, 60);
    r}

pub fn mixed_objective_logits(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = 2 + seed as usize % 5;
    let z = randn(&mut rng, [b, 4, 1]);
    let targets: Vec<Vec<f64>> = (0..b).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
    let clean: Vec<bool> = (0..b).map(|i| if i == 0 { true } else { rng.random_bool(0.5) }).collect();
    let mut store = ParameterStore::new();
    
    check_gradients(&mut rng, &mut store, vec![z], &mut |_, xs, dy| {
        let o = objective(&xs[0], &targets, &clean).unwrap();
        let y = Tensor3::from_vec(vec![o.total()], [1, 1, 1]).unwrap();
        match dy {
            Some(_) => (y, vec![o.dlogits]),
            None => (y, vec![]),
        }
    }, true, 1000)}

pub fn mixed_objective_through_network(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = 4;
    let mut net = Network::<f64>::build(&tiny_model(3), 2, seed).unwrap();
    let mut store = take_store(&mut net);
    let x = randn(&mut rng, [b, 2, 20]);
    let wide = randn(&mut rng, [b, 9, 1]);
    let targets: Vec<Vec<f64>> = (0..b).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
    let clean = vec![true, false, true, false];
    let plan = MixPlan::random(b, 4.0, &mut rng).unwrap();
    let r = check_gradients(&mut rng, &mut store, vec![x, wide], &mut |s, xs, _| {
        std::mem::swap(net.store_mut(), s);
        let o = mixed_step(&mut net, &xs[0], &xs[1], &targets, &clean, &plan).unwrap();
        std::mem::swap(net.store_mut(), s);
        (Tensor3::from_vec(vec![o.total()], [1, 1, 1]).unwrap(), Vec::new())
    }, true, 60);
    r}
