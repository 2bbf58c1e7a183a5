use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::model::{probabilities, Network};
use crate::nn::{Adam, Mode, Real, Tensor3};
use crate::signal_prep::PreparedSet;
use crate::swa_ensemble::{finalize_swa, EnsembleSet, SwaAccumulator};

use super::config::TrainConfig;
use super::gmm::{fit_gmm2, SamplePartition};
use super::loss::per_sample_loss;
use super::mixup::MixPlan;
use super::objective::{bce_with_logits, objective, Objective};
use super::refine::{coguess_noisy, refine_clean};

/// Random stream `m` of a seed. Network 1 and the baseline share stream 1.
fn stream(seed: u64, m: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m);
    rng
}

fn init_seed(seed: u64, m: u64) -> u64 {
    stream(seed, 1000 + m).next_u64()
}

/// Shuffled batches over `n` samples; a trailing batch of one sample is dropped.
fn batches<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

fn check_size(set: &PreparedSet, batch: usize) -> Result<()> {
    if set.len() < batch {
        return Err(Error::Config(format!(
            "dataset of {} samples is smaller than one batch of {batch}",
            set.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Divide,
}

/// Averages over the optimizer steps of one network in one epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetEpochMetrics {
    pub loss: f64,
    pub l_x: f64,
    pub l_u: f64,
    pub steps: usize,
    /// Fraction of samples the partner's partition marked clean.
    pub clean_fraction: Option<f64>,
}

impl NetEpochMetrics {
    fn add(&mut self, l_x: f64, l_u: f64) {
        self.l_x += l_x;
        self.l_u += l_u;
        self.loss += l_x + l_u;
        self.steps += 1;
    }

    fn finish(mut self) -> Self {
        let k = self.steps.max(1) as f64;
        self.loss /= k;
        self.l_x /= k;
        self.l_u /= k;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: Phase,
    pub nets: Vec<NetEpochMetrics>,
}

/// Twin networks, their optimizers and the partitions they produce for each other.
#[derive(Debug, Clone)]
pub struct CoTrainState {
    pub nets: [Network<f32>; 2],
    pub optimizers: [Adam<f32>; 2],
    /// Completed epochs.
    pub epoch: usize,
    pub warmup_epochs: usize,
    /// `partitions[m]` was produced by network `m` and consumed by the other network.
    pub partitions: [Option<SamplePartition>; 2],
    /// Epoch whose end-of-epoch weights produced the current partitions.
    pub partition_epoch: usize,
    pub swa: [SwaAccumulator<f32>; 2],
    pub history: Vec<EpochMetrics>,
    rngs: [ChaCha8Rng; 2],
}

impl CoTrainState {
    pub fn new(config: &TrainConfig, n_labels: usize, in_channels: usize) -> Result<Self> {
        config.validate()?;
        let model = config.model(n_labels)?;
        let nets = [
            Network::build(&model, in_channels, init_seed(config.seed, 1))?,
            Network::build(&model, in_channels, init_seed(config.seed, 2))?,
        ];
        let optimizers = [
            Adam::new(nets[0].store(), config.optimizer),
            Adam::new(nets[1].store(), config.optimizer),
        ];
        Ok(CoTrainState {
            nets,
            optimizers,
            epoch: 0,
            warmup_epochs: config.warmup_epochs,
            partitions: [None, None],
            partition_epoch: 0,
            swa: [
                SwaAccumulator::new(config.swa_epochs),
                SwaAccumulator::new(config.swa_epochs),
            ],
            history: Vec::new(),
            rngs: [stream(config.seed, 1), stream(config.seed, 2)],
        })
    }

    /// Runs one epoch of both networks.
    pub fn step_epoch(&mut self, config: &TrainConfig, set: &PreparedSet) -> Result<&EpochMetrics> {
        let epoch = self.epoch + 1;
        let metrics = if epoch <= self.warmup_epochs {
            let mut nets = Vec::with_capacity(2);
            for m in 0..2 {
                nets.push(warmup_epoch(
                    &mut self.nets[m],
                    &mut self.optimizers[m],
                    set,
                    config.batch_size,
                    &mut self.rngs[m],
                )?);
            }
            EpochMetrics {
                epoch,
                phase: Phase::Warmup,
                nets,
            }
        } else {
            let mut snapshots = self.nets.clone();
            self.divide(config, set, &mut snapshots)?;
            let mut nets = Vec::with_capacity(2);
            for m in 0..2 {
                let partition = self.partitions[1 - m].as_ref().expect("partition computed");
                nets.push(divide_epoch(
                    &mut self.nets[m],
                    &mut self.optimizers[m],
                    &mut snapshots[1 - m],
                    partition,
                    set,
                    config,
                    &mut self.rngs[m],
                )?);
            }
            EpochMetrics {
                epoch,
                phase: Phase::Divide,
                nets,
            }
        };
        for m in 0..2 {
            if self.swa[m].in_window(epoch, config.epochs) {
                self.swa[m].absorb(&self.nets[m])?;
            }
        }
        self.epoch = epoch;
        self.history.push(metrics);
        Ok(self.history.last().expect("just pushed"))
    }

    /// Fits one mixture per network on its current per-sample losses.
    fn divide(&mut self, config: &TrainConfig, set: &PreparedSet, snapshots: &mut [Network<f32>; 2]) -> Result<()> {
        for (m, snap) in snapshots.iter_mut().enumerate() {
            let losses = per_sample_loss(snap, set, config.eval_chunk)?;
            self.partitions[m] = Some(match fit_gmm2(&losses, config.em_iters) {
                Err(Error::DegenerateLosses) => SamplePartition::all_clean(losses.len()),
                other => other?,
            });
        }
        self.partition_epoch = self.epoch;
        Ok(())
    }

    /// Mixtures fitted on the losses of the networks as they are now.
    pub fn current_partitions(&self, config: &TrainConfig, set: &PreparedSet) -> Result<[SamplePartition; 2]> {
        let fit = |net: &Network<f32>| -> Result<SamplePartition> {
            let losses = per_sample_loss(&mut net.clone(), set, config.eval_chunk)?;
            match fit_gmm2(&losses, config.em_iters) {
                Err(Error::DegenerateLosses) => Ok(SamplePartition::all_clean(losses.len())),
                other => other,
            }
        };
        Ok([fit(&self.nets[0])?, fit(&self.nets[1])?])
    }

    /// Averaged copies of both networks and the four-member ensemble.
    pub fn ensemble(&self, config: &TrainConfig, set: &PreparedSet) -> Result<EnsembleSet<f32>> {
        let refresh = refresh_batches(set, config);
        let swa1 = finalize_swa(&self.swa[0], &refresh)?;
        let swa2 = finalize_swa(&self.swa[1], &refresh)?;
        EnsembleSet::new([self.nets[0].clone(), self.nets[1].clone(), swa1, swa2])
    }
}

/// Deterministic batches of up to `bn_refresh_samples` training inputs.
pub fn refresh_batches(set: &PreparedSet, config: &TrainConfig) -> Vec<(Tensor3<f32>, Tensor3<f32>)> {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut stream(config.seed, 3));
    order.truncate(config.bn_refresh_samples);
    let mut chunks: Vec<Vec<usize>> = order.chunks(config.batch_size).map(<[usize]>::to_vec).collect();
    if chunks.len() > 1 && chunks.last().is_some_and(|c| c.len() < 2) {
        let tail = chunks.pop().expect("non-empty");
        chunks.last_mut().expect("non-empty").extend(tail);
    }
    chunks.iter().map(|c| set.eval_batch(c)).collect()
}

fn warmup_epoch<R: Rng + ?Sized>(
    net: &mut Network<f32>,
    opt: &mut Adam<f32>,
    set: &PreparedSet,
    batch: usize,
    rng: &mut R,
) -> Result<NetEpochMetrics> {
    let mut metrics = NetEpochMetrics::default();
    for idx in batches(set.len(), batch, rng) {
        let (x, w) = set.train_batch(&idx, rng);
        let labels: Vec<Vec<u8>> = idx.iter().map(|&i| set.samples[i].labels.clone()).collect();
        net.zero_grad();
        let logits = net.forward(&x, &w, Mode::Train)?;
        let (loss, dlogits) = bce_with_logits(&logits, &labels)?;
        net.backward(&dlogits)?;
        opt.step(net.store_mut());
        metrics.add(loss, 0.0);
    }
    Ok(metrics.finish())
}

/// Forward through encoder, pooled-vector mixing and head, then backward of the
/// mixed objective. Gradients accumulate into the network's parameters.
pub fn mixed_step<T: Real>(
    net: &mut Network<T>,
    x: &Tensor3<T>,
    wide: &Tensor3<T>,
    targets: &[Vec<f64>],
    clean_origin: &[bool],
    plan: &MixPlan,
) -> Result<Objective<T>> {
    let h = net.encode(x, wide, Mode::Train)?;
    let (h_mix, u_mix) = plan.apply(&h, targets)?;
    let logits = net.head(h_mix, Mode::Train)?;
    let obj = objective(&logits, &u_mix, clean_origin)?;
    let dh_mix = net.head_backward(&obj.dlogits)?;
    net.encode_backward(&plan.backward(&dh_mix))?;
    Ok(obj)
}

fn divide_epoch<R: Rng + ?Sized>(
    net: &mut Network<f32>,
    opt: &mut Adam<f32>,
    partner: &mut Network<f32>,
    partition: &SamplePartition,
    set: &PreparedSet,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<NetEpochMetrics> {
    let mut metrics = NetEpochMetrics {
        clean_fraction: Some(partition.clean_fraction()),
        ..NetEpochMetrics::default()
    };
    for idx in batches(set.len(), config.batch_size, rng) {
        let (x, w) = set.train_batch(&idx, rng);
        let own = probabilities(net, &x, &w, config.eval_chunk)?;
        let noisy_rows: Vec<usize> = (0..idx.len()).filter(|&r| !partition.is_clean[idx[r]]).collect();
        let guessed = if noisy_rows.is_empty() {
            Vec::new()
        } else {
            probabilities(partner, &x.select(&noisy_rows), &w.select(&noisy_rows), config.eval_chunk)?
        };
        let mut guessed = guessed.into_iter();
        let mut targets = Vec::with_capacity(idx.len());
        let mut clean_origin = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            let labels = &set.samples[i].labels;
            let clean = partition.is_clean[i];
            targets.push(if clean {
                refine_clean(labels, &own[r], partition.lambda_gmm[i])
            } else {
                let p2 = guessed.next().expect("one guess per noisy row");
                coguess_noisy(&own[r], &p2, labels, config.lambda_n)
            });
            clean_origin.push(clean);
        }
        let plan = MixPlan::random(idx.len(), config.mixup_alpha, rng)?;
        net.zero_grad();
        let obj = mixed_step(net, &x, &w, &targets, &clean_origin, &plan)?;
        opt.step(net.store_mut());
        metrics.add(obj.l_x, obj.l_u);
    }
    Ok(metrics.finish())
}

/// Trains both networks for `config.epochs` epochs, calling `observe` after every epoch.
pub fn train_with<F>(config: &TrainConfig, set: &PreparedSet, mut observe: F) -> Result<CoTrainState>
where
    F: FnMut(&CoTrainState) -> Result<()>,
{
    config.validate()?;
    check_size(set, config.batch_size)?;
    let mut state = CoTrainState::new(config, set.n_labels, set.combo.count())?;
    for _ in 0..config.epochs {
        state.step_epoch(config, set)?;
        log::info!(
            "epoch {}/{}: {}",
            state.epoch,
            config.epochs,
            serde_json::to_string(state.history.last().expect("epoch recorded"))?
        );
        observe(&state)?;
    }
    Ok(state)
}

pub fn train(config: &TrainConfig, set: &PreparedSet) -> Result<CoTrainState> {
    train_with(config, set, |_| Ok(()))
}

/// Single network trained with plain cross-entropy for every epoch.
pub fn train_baseline(config: &TrainConfig, set: &PreparedSet) -> Result<Network<f32>> {
    config.validate()?;
    check_size(set, config.baseline_batch_size)?;
    let model = config.model(set.n_labels)?;
    let mut net = Network::build(&model, set.combo.count(), init_seed(config.seed, 1))?;
    let mut opt = Adam::new(net.store(), config.optimizer);
    let mut rng = stream(config.seed, 1);
    for epoch in 1..=config.epochs {
        let m = warmup_epoch(&mut net, &mut opt, set, config.baseline_batch_size, &mut rng)?;
        log::info!("baseline epoch {epoch}/{}: loss {:.5}", config.epochs, m.loss);
    }
    Ok(net)
}

pub const METRICS_FILE: &str = "metrics.jsonl";

/// Writes per-epoch checkpoints, partition dumps and the metrics log of a run.
#[derive(Debug, Clone)]
pub struct RunWriter {
    dir: PathBuf,
    leads: Vec<String>,
    ids: Vec<String>,
}

#[derive(Serialize)]
struct PartitionLine<'a> {
    id: &'a str,
    lambda_gmm: f64,
}

impl RunWriter {
    pub fn create(dir: &Path, set: &PreparedSet) -> Result<Self> {
        fs::create_dir_all(dir.join("epochs")).at(dir)?;
        fs::create_dir_all(dir.join("partitions")).at(dir)?;
        let metrics = dir.join(METRICS_FILE);
        fs::write(&metrics, "").at(&metrics)?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            leads: set.combo.lead_names(),
            ids: set.samples.iter().map(|s| s.id.clone()).collect(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record(&self, state: &CoTrainState) -> Result<()> {
        let e = state.epoch;
        for (m, net) in state.nets.iter().enumerate() {
            let path = self.dir.join("epochs").join(format!("epoch{e:03}_net{}.ckpt", m + 1));
            net.to_checkpoint(&self.leads)?.save(&path)?;
        }
        if state.partition_epoch + 1 == e && e > state.warmup_epochs {
            for (m, part) in state.partitions.iter().enumerate() {
                let Some(part) = part else { continue };
                let path = self
                    .dir
                    .join("partitions")
                    .join(format!("epoch{e:03}_from_net{}.jsonl", m + 1));
                let mut out = String::new();
                for (id, &l) in self.ids.iter().zip(&part.lambda_gmm) {
                    out.push_str(&serde_json::to_string(&PartitionLine { id, lambda_gmm: l })?);
                    out.push('\n');
                }
                fs::write(&path, out).at(&path)?;
            }
        }
        let path = self.dir.join(METRICS_FILE);
        let mut f = fs::OpenOptions::new().append(true).open(&path).at(&path)?;
        let line = serde_json::to_string(state.history.last().expect("epoch recorded"))?;
        writeln!(f, "{line}").at(&path)
    }
}
