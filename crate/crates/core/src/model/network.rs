use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    BatchNorm, Checkpoint, Conv1d, ConvGeometry, FusedMbConv, GlobalMaxPool, Linear, Mish, Mode,
    ParameterStore, Real, Tensor3,
};

use super::config::{ModelConfig, StageOp};

#[derive(Debug, Clone)]
struct ConvBnMish<T> {
    conv: Conv1d<T>,
    bn: BatchNorm<T>,
    act: Mish<T>,
}

impl<T: Real> ConvBnMish<T> {
    fn forward(&mut self, store: &mut ParameterStore<T>, x: Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        let record = mode == Mode::Train;
        let h = self.conv.forward(store, x, record)?;
        let h = self.bn.forward(store, h, mode)?;
        Ok(self.act.forward(h, record))
    }

    fn backward(&mut self, store: &mut ParameterStore<T>, dy: Tensor3<T>) -> Result<Tensor3<T>> {
        let g = self.act.backward(dy)?;
        let g = self.bn.backward(store, &g)?;
        self.conv.backward(store, &g)
    }
}

#[derive(Debug, Clone)]
struct DenseBnMish<T> {
    fc: Linear<T>,
    bn: BatchNorm<T>,
    act: Mish<T>,
}

#[derive(Debug, Clone)]
enum Block<T> {
    Plain(ConvBnMish<T>),
    Fused(FusedMbConv<T>),
}

/// Metadata stored alongside network weights in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub model: ModelConfig,
    pub in_channels: usize,
    #[serde(default)]
    pub leads: Vec<String>,
}

/// The EfficientNet-1D classifier: wide-feature pathway, convolutional
/// stages, global max pooling and a two-layer head.
#[derive(Debug, Clone)]
pub struct Network<T> {
    config: ModelConfig,
    in_channels: usize,
    store: ParameterStore<T>,
    wide: Vec<DenseBnMish<T>>,
    blocks: Vec<Block<T>>,
    /// Stage index of every block.
    block_stage: Vec<usize>,
    pool: GlobalMaxPool,
    fc1: Linear<T>,
    head_act: Mish<T>,
    fc2: Linear<T>,
}

impl<T: Real> Network<T> {
    /// Builds a freshly initialized network for `in_channels` input leads.
    pub fn build(config: &ModelConfig, in_channels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if in_channels == 0 {
            return Err(Error::Config("network needs at least one input channel".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();

        let mut wide = Vec::with_capacity(config.wide_layers);
        let mut width = config.wide_in;
        for i in 0..config.wide_layers {
            let name = format!("wide.{i}");
            wide.push(DenseBnMish {
                fc: Linear::new(&mut store, &format!("{name}.fc"), width, config.wide_dim, &mut rng)?,
                bn: BatchNorm::new(&mut store, &format!("{name}.bn"), config.wide_dim)?,
                act: Mish::new(),
            });
            width = config.wide_dim;
        }

        let mut blocks = Vec::new();
        let mut block_stage = Vec::new();
        let mut channels = in_channels;
        for (si, stage) in config.stages.iter().enumerate() {
            for li in 0..stage.layers {
                let stride = if li == 0 { stage.stride } else { 1 };
                let name = format!("stage{si}.{li}");
                let block = match stage.op {
                    StageOp::Conv => Block::Plain(ConvBnMish {
                        conv: Conv1d::new(
                            &mut store,
                            &format!("{name}.conv"),
                            ConvGeometry::new(channels, stage.out_channels, stage.kernel, stride)?,
                            &mut rng,
                        )?,
                        bn: BatchNorm::new(&mut store, &format!("{name}.bn"), stage.out_channels)?,
                        act: Mish::new(),
                    }),
                    StageOp::FusedMbConv { expand } => Block::Fused(FusedMbConv::new(
                        &mut store,
                        &name,
                        channels,
                        stage.out_channels,
                        stage.kernel,
                        stride,
                        expand,
                        config.wide_dim,
                        &mut rng,
                    )?),
                };
                blocks.push(block);
                block_stage.push(si);
                channels = stage.out_channels;
            }
        }

        let fc1 = Linear::new(&mut store, "head.fc1", channels, config.mlp_hidden, &mut rng)?;
        let fc2 = Linear::new(&mut store, "head.fc2", config.mlp_hidden, config.n_labels, &mut rng)?;
        Ok(Network {
            config: config.clone(),
            in_channels,
            store,
            wide,
            blocks,
            block_stage,
            pool: GlobalMaxPool::new(),
            fc1,
            head_act: Mish::new(),
            fc2,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn store(&self) -> &ParameterStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.store
    }

    pub fn n_labels(&self) -> usize {
        self.config.n_labels
    }

    fn check_inputs(&self, x: &Tensor3<T>, wide: &Tensor3<T>) -> Result<()> {
        if x.channels() != self.in_channels || x.frames() == 0 || x.batch() == 0 {
            return Err(Error::Shape(format!(
                "network expects (B, {}, W) input, got {:?}",
                self.in_channels,
                x.shape()
            )));
        }
        if wide.shape() != [x.batch(), self.config.wide_in, 1] {
            return Err(Error::Shape(format!(
                "wide features {:?}, expected {:?}",
                wide.shape(),
                [x.batch(), self.config.wide_in, 1]
            )));
        }
        Ok(())
    }

    /// Pooled hidden vectors `(B, H, 1)`.
    pub fn encode(&mut self, x: &Tensor3<T>, wide: &Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        self.encode_traced(x, wide, mode, None)
    }

    /// As [`encode`](Self::encode), also reporting every stage's output shape.
    pub fn encode_traced(
        &mut self,
        x: &Tensor3<T>,
        wide: &Tensor3<T>,
        mode: Mode,
        mut trace: Option<&mut Vec<[usize; 3]>>,
    ) -> Result<Tensor3<T>> {
        self.check_inputs(x, wide)?;
        let record = mode == Mode::Train;
        let store = &mut self.store;

        let mut e = wide.clone();
        for layer in &mut self.wide {
            e = layer.fc.forward(store, e, record)?;
            e = layer.bn.forward(store, e, mode)?;
            e = layer.act.forward(e, record);
        }

        let mut h = x.clone();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            h = match block {
                Block::Plain(b) => b.forward(store, h, mode)?,
                Block::Fused(b) => b.forward(store, h, Some(&e), mode)?,
            };
            let stage_ends = self.block_stage.get(i + 1) != Some(&self.block_stage[i]);
            if let (true, Some(t)) = (stage_ends, trace.as_deref_mut()) {
                t.push(h.shape());
            }
        }
        self.pool.forward(&h, record)
    }

    /// Backpropagates a gradient on the pooled hidden vectors into every encoder parameter.
    pub fn encode_backward(&mut self, dh: &Tensor3<T>) -> Result<()> {
        let store = &mut self.store;
        let mut g = self.pool.backward(dh)?;
        let mut de: Option<Tensor3<T>> = None;
        for block in self.blocks.iter_mut().rev() {
            g = match block {
                Block::Plain(b) => b.backward(store, g)?,
                Block::Fused(b) => {
                    let (dx, dctx) = b.backward(store, &g)?;
                    if let Some(d) = dctx {
                        match &mut de {
                            Some(acc) => acc.data_mut().iter_mut().zip(d.data()).for_each(|(a, &v)| *a += v),
                            None => de = Some(d),
                        }
                    }
                    dx
                }
            };
        }
        if let Some(mut de) = de {
            for layer in self.wide.iter_mut().rev() {
                de = layer.act.backward(de)?;
                de = layer.bn.backward(store, &de)?;
                de = layer.fc.backward(store, &de)?;
            }
        } else {
            // wide pathway never influenced the output; drop its recorded state
            for layer in self.wide.iter_mut().rev() {
                let zero = Tensor3::zeros(dh.batch(), self.config.wide_dim, 1);
                let d = layer.act.backward(zero)?;
                let d = layer.bn.backward(store, &d)?;
                layer.fc.backward(store, &d)?;
            }
        }
        Ok(())
    }

    /// Classification head on pooled (or mixed) hidden vectors; returns logits `(B, N, 1)`.
    pub fn head(&mut self, h: Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        let record = mode == Mode::Train;
        let z = self.fc1.forward(&self.store, h, record)?;
        let a = self.head_act.forward(z, record);
        self.fc2.forward(&self.store, a, record)
    }

    pub fn head_backward(&mut self, dlogits: &Tensor3<T>) -> Result<Tensor3<T>> {
        let da = self.fc2.backward(&mut self.store, dlogits)?;
        let dz = self.head_act.backward(da)?;
        self.fc1.backward(&mut self.store, &dz)
    }

    /// Logits `(B, N, 1)`.
    pub fn forward(&mut self, x: &Tensor3<T>, wide: &Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        let h = self.encode(x, wide, mode)?;
        self.head(h, mode)
    }

    /// Accumulates parameter gradients for `d loss / d logits` of the last training forward.
    pub fn backward(&mut self, dlogits: &Tensor3<T>) -> Result<()> {
        let dh = self.head_backward(dlogits)?;
        self.encode_backward(&dh)
    }

    pub fn zero_grad(&mut self) {
        self.store.zero_grad();
    }

    fn reset_batch_norms(&mut self) {
        let Network { wide, blocks, store, .. } = self;
        for layer in wide.iter_mut() {
            layer.bn.reset_running_stats(store);
        }
        for block in blocks.iter_mut() {
            match block {
                Block::Plain(b) => b.bn.reset_running_stats(store),
                Block::Fused(b) => {
                    for bn in b.batch_norms_mut() {
                        bn.reset_running_stats(store);
                    }
                }
            }
        }
    }

    pub fn has_batch_norm(&self) -> bool {
        !self.store.buffers().is_empty()
    }

    /// Recomputes batch-norm running statistics as the average over `batches`.
    pub fn refresh_batch_norm<'a, I>(&mut self, batches: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a Tensor3<T>, &'a Tensor3<T>)>,
    {
        self.reset_batch_norms();
        let mut seen = false;
        for (x, wide) in batches {
            self.encode(x, wide, Mode::CollectStats)?;
            seen = true;
        }
        if !seen {
            return Err(Error::State("batch-norm refresh needs at least one batch".into()));
        }
        Ok(())
    }

    pub fn meta(&self, leads: &[String]) -> NetworkMeta {
        NetworkMeta {
            model: self.config.clone(),
            in_channels: self.in_channels,
            leads: leads.to_vec(),
        }
    }

    pub fn to_checkpoint(&self, leads: &[String]) -> Result<Checkpoint> {
        Ok(Checkpoint::from_store(
            serde_json::to_string(&self.meta(leads))?,
            &self.store,
        ))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, NetworkMeta)> {
        let meta: NetworkMeta = serde_json::from_str(&ck.meta)?;
        let mut net = Network::build(&meta.model, meta.in_channels, 0)?;
        ck.load_into(&mut net.store)?;
        Ok((net, meta))
    }
}
