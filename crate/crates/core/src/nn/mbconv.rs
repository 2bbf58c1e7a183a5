use rand::Rng;

use crate::error::{Error, Result};

use super::real::{gemm, MatRef};
use super::{init, BatchNorm, Conv1d, ConvGeometry, Mish, Mode, ParamId, ParameterStore, Real, SqueezeExcite, Tensor3};

/// Fused-MBConv block:
/// conv(k, stride, C→expand·C) → BN → Mish → squeeze-excite → [concat context] → pointwise conv → BN.
///
/// The optional context vector (one per batch item) is broadcast over frames and
/// appended to the channels entering the pointwise convolution.
#[derive(Debug, Clone)]
pub struct FusedMbConv<T> {
    pub in_channels: usize,
    pub expanded: usize,
    pub out_channels: usize,
    pub context_dim: usize,
    pub conv: Conv1d<T>,
    pub bn1: BatchNorm<T>,
    act: Mish<T>,
    pub se: SqueezeExcite<T>,
    /// `(out_channels, expanded + context_dim, 1)`
    pub pointwise: ParamId,
    pub bn2: BatchNorm<T>,
    cache: Option<(Tensor3<T>, Option<Tensor3<T>>)>,
}

impl<T: Real> FusedMbConv<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        expand: usize,
        context_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(1..=2).contains(&expand) {
            return Err(Error::Config(format!("expansion must be 1 or 2, got {expand}")));
        }
        let expanded = in_channels * expand;
        let geom = ConvGeometry::new(in_channels, expanded, kernel, stride)?;
        let conv = Conv1d::new(store, &format!("{name}.conv"), geom, rng)?;
        let bn1 = BatchNorm::new(store, &format!("{name}.bn1"), expanded)?;
        let se = SqueezeExcite::new(store, &format!("{name}.se"), expanded, rng)?;
        let fan_in = expanded + context_dim;
        let pointwise = store.add_param(
            &format!("{name}.pointwise.weight"),
            &[out_channels, fan_in, 1],
            init::fan_in_uniform(rng, out_channels * fan_in, fan_in),
        )?;
        let bn2 = BatchNorm::new(store, &format!("{name}.bn2"), out_channels)?;
        Ok(FusedMbConv {
            in_channels,
            expanded,
            out_channels,
            context_dim,
            conv,
            bn1,
            act: Mish::new(),
            se,
            pointwise,
            bn2,
            cache: None,
        })
    }

    fn row_len(&self) -> usize {
        self.expanded + self.context_dim
    }

    /// Weight columns acting on the block's own channels.
    fn w_hidden<'a>(&self, w: &'a [T]) -> MatRef<'a, T> {
        MatRef {
            data: w,
            rows: self.out_channels,
            cols: self.expanded,
            rs: self.row_len(),
            cs: 1,
        }
    }

    /// Weight columns acting on the broadcast context channels.
    fn w_context<'a>(&self, w: &'a [T]) -> MatRef<'a, T> {
        MatRef {
            data: &w[self.expanded..],
            rows: self.out_channels,
            cols: self.context_dim,
            rs: self.row_len(),
            cs: 1,
        }
    }

    fn check_context<'c>(&self, context: Option<&'c Tensor3<T>>, batch: usize) -> Result<Option<&'c Tensor3<T>>> {
        if self.context_dim == 0 {
            return Ok(None);
        }
        match context {
            Some(c) if c.shape() == [batch, self.context_dim, 1] => Ok(Some(c)),
            Some(c) => Err(Error::Shape(format!(
                "context {:?}, expected {:?}",
                c.shape(),
                [batch, self.context_dim, 1]
            ))),
            None => Err(Error::Shape("block expects a context vector".into())),
        }
    }

    pub fn forward(
        &mut self,
        store: &mut ParameterStore<T>,
        x: Tensor3<T>,
        context: Option<&Tensor3<T>>,
        mode: Mode,
    ) -> Result<Tensor3<T>> {
        let record = mode == Mode::Train;
        let batch = x.batch();
        let context = self.check_context(context, batch)?;
        let h = self.conv.forward(store, x, record)?;
        let h = self.bn1.forward(store, h, mode)?;
        let h = self.act.forward(h, record);
        let h = self.se.forward(store, h, record)?;

        let frames = h.frames();
        let mut p = Tensor3::zeros(batch, self.out_channels, frames);
        let w = store.value(self.pointwise);
        let mut shift = vec![T::zero(); self.out_channels];
        for b in 0..batch {
            let out = p.item_mut(b);
            if let Some(ctx) = context {
                let e = MatRef::rows(ctx.item(b), self.context_dim, 1);
                gemm(T::one(), self.w_context(w), e, T::zero(), &mut shift, 1);
                for (row, &s) in out.chunks_mut(frames).zip(&shift) {
                    row.fill(s);
                }
            }
            gemm(
                T::one(),
                self.w_hidden(w),
                MatRef::rows(h.item(b), self.expanded, frames),
                T::one(),
                out,
                frames,
            );
        }
        let y = self.bn2.forward(store, p, mode)?;
        if record {
            self.cache = Some((h, context.cloned()));
        }
        Ok(y)
    }

    /// Returns the input gradient and, when the block takes context, the context gradient.
    pub fn backward(
        &mut self,
        store: &mut ParameterStore<T>,
        dy: &Tensor3<T>,
    ) -> Result<(Tensor3<T>, Option<Tensor3<T>>)> {
        let (h, context) = self
            .cache
            .take()
            .ok_or_else(|| Error::State("fused-mbconv backward without a recorded forward".into()))?;
        let dp = self.bn2.backward(store, dy)?;
        let [batch, _, frames] = h.shape();
        let row_len = self.row_len();

        // per-item frame sums of dp drive the context path
        let dp_sum: Vec<T> = dp.data().chunks(frames).map(|r| r.iter().copied().sum()).collect();
        {
            let dw = store.value_and_grad(self.pointwise).1;
            for b in 0..batch {
                gemm(
                    T::one(),
                    MatRef::rows(dp.item(b), self.out_channels, frames),
                    MatRef::rows(h.item(b), self.expanded, frames).t(),
                    T::one(),
                    dw,
                    row_len,
                );
            }
            if let Some(ctx) = &context {
                gemm(
                    T::one(),
                    MatRef::rows(&dp_sum, batch, self.out_channels).t(),
                    MatRef::rows(ctx.data(), batch, self.context_dim),
                    T::one(),
                    &mut dw[self.expanded..],
                    row_len,
                );
            }
        }
        let w = store.value(self.pointwise);
        let mut dh = Tensor3::zeros(batch, self.expanded, frames);
        for b in 0..batch {
            gemm(
                T::one(),
                self.w_hidden(w).t(),
                MatRef::rows(dp.item(b), self.out_channels, frames),
                T::zero(),
                dh.item_mut(b),
                frames,
            );
        }
        let dcontext = match context {
            Some(_) => {
                let mut de = Tensor3::zeros(batch, self.context_dim, 1);
                gemm(
                    T::one(),
                    MatRef::rows(&dp_sum, batch, self.out_channels),
                    self.w_context(w),
                    T::zero(),
                    de.data_mut(),
                    self.context_dim,
                );
                Some(de)
            }
            None => None,
        };
        let dh = self.se.backward(store, &dh)?;
        let dh = self.act.backward(dh)?;
        let dh = self.bn1.backward(store, &dh)?;
        let dx = self.conv.backward(store, &dh)?;
        Ok((dx, dcontext))
    }

    pub fn batch_norms_mut(&mut self) -> [&mut BatchNorm<T>; 2] {
        [&mut self.bn1, &mut self.bn2]
    }
}
