use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Test-fold membership as sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Indices outside fold `f`, in ascending order.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }

    pub fn test_indices(&self, f: usize) -> Vec<usize> {
        let mut idx = self.folds[f].clone();
        idx.sort_unstable();
        idx
    }
}

/// Picks the index of the largest key, breaking exact ties uniformly at random.
fn argmax_random<R: Rng + ?Sized>(candidates: &[usize], key: impl Fn(usize) -> (f64, f64), rng: &mut R) -> usize {
    let best = candidates
        .iter()
        .map(|&j| key(j))
        .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |a, b| if b > a { b } else { a });
    let tied: Vec<usize> = candidates.iter().copied().filter(|&j| key(j) == best).collect();
    tied[rng.random_range(0..tied.len())]
}

/// Greedy iterative stratification of multi-hot labels into `k` folds.
///
/// Labels are processed from the one with the fewest unassigned positives; each of
/// its samples goes to the fold still missing most of that label, then the fold
/// missing most samples overall.
pub fn stratified_kfold(labels: &[Vec<u8>], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot split {n} samples into {k} folds")));
    }
    let n_labels = labels.first().map_or(0, Vec::len);
    if labels.iter().any(|l| l.len() != n_labels) {
        return Err(Error::InvalidInput("label rows differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut want_total = vec![n as f64 / k as f64; k];
    let mut want_label: Vec<Vec<f64>> = (0..n_labels)
        .map(|l| {
            let pos = labels.iter().filter(|r| r[l] == 1).count();
            vec![pos as f64 / k as f64; k]
        })
        .collect();
    let mut assigned = vec![false; n];
    let mut folds = vec![Vec::new(); k];
    let all_folds: Vec<usize> = (0..k).collect();

    let mut place = |i: usize, fold: usize, want_total: &mut Vec<f64>, want_label: &mut Vec<Vec<f64>>| {
        folds[fold].push(i);
        want_total[fold] -= 1.0;
        for (l, w) in want_label.iter_mut().enumerate() {
            if labels[i][l] == 1 {
                w[fold] -= 1.0;
            }
        }
    };

    loop {
        let remaining = |l: usize| order.iter().filter(|&&i| !assigned[i] && labels[i][l] == 1).count();
        let next = (0..n_labels)
            .map(|l| (remaining(l), l))
            .filter(|&(c, _)| c > 0)
            .min();
        let Some((_, l)) = next else { break };
        for &i in &order {
            if assigned[i] || labels[i][l] == 0 {
                continue;
            }
            let fold = argmax_random(&all_folds, |j| (want_label[l][j], want_total[j]), &mut rng);
            place(i, fold, &mut want_total, &mut want_label);
            assigned[i] = true;
        }
    }
    for &i in &order {
        if !assigned[i] {
            let fold = argmax_random(&all_folds, |j| (want_total[j], 0.0), &mut rng);
            place(i, fold, &mut want_total, &mut want_label);
            assigned[i] = true;
        }
    }
    Ok(FoldPlan { k, folds })
}
