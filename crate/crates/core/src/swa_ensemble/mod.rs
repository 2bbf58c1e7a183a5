//! Weight averaging of late-training snapshots and the four-member ensemble.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{probabilities, Network, NetworkMeta, Prediction};
use crate::nn::{Checkpoint, Real, Tensor3};

/// Checkpoint file names of the ensemble members inside a run directory, in member order.
pub const MEMBER_FILES: [&str; 4] = ["net1.ckpt", "net2.ckpt", "swa1.ckpt", "swa2.ckpt"];

/// Running mean of the trainable parameters of absorbed snapshots.
#[derive(Debug, Clone)]
pub struct SwaAccumulator<T> {
    /// Number of trailing epochs whose snapshots are averaged.
    pub window: usize,
    template: Option<Network<T>>,
    mean: Vec<Vec<f64>>,
    count: usize,
}

impl<T: Real> SwaAccumulator<T> {
    pub fn new(window: usize) -> Self {
        SwaAccumulator {
            window,
            template: None,
            mean: Vec::new(),
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// True when the snapshot of `epoch` (1-based) out of `epochs` falls inside the window.
    pub fn in_window(&self, epoch: usize, epochs: usize) -> bool {
        epoch + self.window > epochs
    }

    /// Current mean of every parameter, in store order.
    pub fn mean(&self) -> &[Vec<f64>] {
        &self.mean
    }

    /// Folds one snapshot into the running mean.
    pub fn absorb(&mut self, net: &Network<T>) -> Result<()> {
        match &self.template {
            None => {
                self.mean = net
                    .store()
                    .params()
                    .iter()
                    .map(|p| p.value.iter().map(|v| v.to_f64_lossy()).collect())
                    .collect();
                self.template = Some(net.clone());
            }
            Some(t) => {
                if t.config() != net.config()
                    || t.in_channels() != net.in_channels()
                    || !t.store().same_layout(net.store())
                {
                    return Err(Error::Shape("snapshot architecture differs from the averaged one".into()));
                }
                let k = (self.count + 1) as f64;
                for (m, p) in self.mean.iter_mut().zip(net.store().params()) {
                    for (a, v) in m.iter_mut().zip(&p.value) {
                        *a += (v.to_f64_lossy() - *a) / k;
                    }
                }
            }
        }
        self.count += 1;
        Ok(())
    }
}

/// Network carrying the averaged weights, with batch-norm statistics
/// recomputed over `batches` of `(signal, wide)` inputs.
pub fn finalize_swa<T: Real>(acc: &SwaAccumulator<T>, batches: &[(Tensor3<T>, Tensor3<T>)]) -> Result<Network<T>> {
    let template = acc
        .template
        .as_ref()
        .filter(|_| acc.count > 0)
        .ok_or_else(|| Error::State("no snapshot has been absorbed".into()))?;
    let mut net = template.clone();
    for (p, m) in net.store_mut().params_mut().iter_mut().zip(&acc.mean) {
        for (v, &a) in p.value.iter_mut().zip(m) {
            *v = T::from_f64_lossy(a);
        }
    }
    if net.has_batch_norm() {
        net.refresh_batch_norm(batches.iter().map(|(x, w)| (x, w)))?;
    }
    Ok(net)
}

/// The two final networks and their weight-averaged copies.
#[derive(Debug, Clone)]
pub struct EnsembleSet<T> {
    pub members: [Network<T>; 4],
}

impl<T: Real> EnsembleSet<T> {
    pub fn new(members: [Network<T>; 4]) -> Result<Self> {
        let first = &members[0];
        if members
            .iter()
            .any(|m| m.config() != first.config() || m.in_channels() != first.in_channels())
        {
            return Err(Error::Shape("ensemble members differ in architecture".into()));
        }
        Ok(EnsembleSet { members })
    }

    /// Loads the four member checkpoints left in a run directory.
    pub fn load_run(dir: &Path) -> Result<(Self, NetworkMeta)> {
        let mut nets = Vec::with_capacity(4);
        let mut meta = None;
        for file in MEMBER_FILES {
            let (net, m) = Network::from_checkpoint(&Checkpoint::load(&dir.join(file))?)?;
            if meta.as_ref().is_some_and(|prev: &NetworkMeta| prev.leads != m.leads) {
                return Err(Error::Checkpoint(format!("{file} was trained on different leads")));
            }
            meta.get_or_insert(m);
            nets.push(net);
        }
        let members: [Network<T>; 4] = nets
            .try_into()
            .map_err(|_| Error::State("expected four members".into()))?;
        Ok((Self::new(members)?, meta.expect("four members loaded")))
    }

    pub fn save_run(&self, dir: &Path, leads: &[String]) -> Result<()> {
        for (net, file) in self.members.iter().zip(MEMBER_FILES) {
            net.to_checkpoint(leads)?.save(&dir.join(file))?;
        }
        Ok(())
    }

    /// Mean of the members' sigmoid outputs, reduced pairwise in member order.
    pub fn probabilities(&mut self, x: &Tensor3<T>, wide: &Tensor3<T>, chunk: usize) -> Result<Vec<Vec<f64>>> {
        let mut each = Vec::with_capacity(4);
        for net in &mut self.members {
            each.push(probabilities(net, x, wide, chunk)?);
        }
        Ok(average_probabilities(&each))
    }
}

/// `((p0 + p1) + (p2 + p3)) / 4` per entry.
pub fn average_probabilities(each: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    debug_assert_eq!(each.len(), 4);
    (0..each[0].len())
        .map(|i| {
            (0..each[0][i].len())
                .map(|k| ((each[0][i][k] + each[1][i][k]) + (each[2][i][k] + each[3][i][k])) / 4.0)
                .collect()
        })
        .collect()
}

/// Thresholded ensemble predictions for every sample of the batch.
pub fn ensemble_predict<T: Real>(
    ensemble: &mut EnsembleSet<T>,
    x: &Tensor3<T>,
    wide: &Tensor3<T>,
    threshold: f64,
) -> Result<Vec<Prediction>> {
    Ok(ensemble
        .probabilities(x, wide, 64)?
        .into_iter()
        .map(|p| Prediction::from_probabilities(p, threshold))
        .collect())
}
