use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Operator used by every layer of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StageOp {
    /// Plain convolution followed by batch norm and Mish.
    Conv,
    /// Fused-MBConv with the given channel expansion (1 or 2).
    FusedMbConv { expand: usize },
}

/// One row of the stage plan. Only the first layer of a stage uses `stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    #[serde(flatten)]
    pub op: StageOp,
    pub kernel: usize,
    pub stride: usize,
    pub out_channels: usize,
    pub layers: usize,
}

impl StageSpec {
    const fn conv(kernel: usize, stride: usize, out_channels: usize) -> Self {
        StageSpec {
            op: StageOp::Conv,
            kernel,
            stride,
            out_channels,
            layers: 1,
        }
    }

    const fn fused(expand: usize, kernel: usize, out_channels: usize, layers: usize) -> Self {
        StageSpec {
            op: StageOp::FusedMbConv { expand },
            kernel,
            stride: 2,
            out_channels,
            layers,
        }
    }
}

/// The eight-stage EfficientNet-1D plan.
pub const STAGES: [StageSpec; 8] = [
    StageSpec::conv(7, 2, 32),
    StageSpec::fused(2, 5, 32, 2),
    StageSpec::fused(1, 5, 64, 1),
    StageSpec::fused(2, 7, 128, 2),
    StageSpec::fused(1, 7, 128, 1),
    StageSpec::fused(2, 7, 256, 2),
    StageSpec::fused(2, 7, 256, 2),
    StageSpec::conv(1, 1, 512),
];

/// Number of wide (hand-crafted) input features: age, 3-way gender, 5 RR statistics.
pub const WIDE_FEATURES: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub stages: Vec<StageSpec>,
    pub n_labels: usize,
    pub wide_in: usize,
    /// Width of the wide embedding appended before each pointwise convolution.
    pub wide_dim: usize,
    pub wide_layers: usize,
    pub mlp_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::standard(24)
    }
}

impl ModelConfig {
    pub fn standard(n_labels: usize) -> Self {
        ModelConfig {
            stages: STAGES.to_vec(),
            n_labels,
            wide_in: WIDE_FEATURES,
            wide_dim: 32,
            wide_layers: 4,
            mlp_hidden: 256,
        }
    }

    /// Same stage plan with every channel count and the head divided by `divisor`.
    pub fn narrowed(n_labels: usize, divisor: usize) -> Result<Self> {
        if divisor == 0 {
            return Err(Error::Config("width divisor must be positive".into()));
        }
        let mut cfg = ModelConfig::standard(n_labels);
        for s in &mut cfg.stages {
            s.out_channels = (s.out_channels / divisor).max(1);
        }
        cfg.wide_dim = (cfg.wide_dim / divisor).max(1);
        cfg.mlp_hidden = (cfg.mlp_hidden / divisor).max(1);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn is_standard(&self) -> bool {
        self.stages == STAGES
    }

    pub fn hidden_dim(&self) -> usize {
        self.stages.last().map_or(0, |s| s.out_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("model needs at least one stage".into()));
        }
        if self.n_labels == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("label count and head width must be positive".into()));
        }
        if self.wide_layers == 0 || self.wide_in == 0 || self.wide_dim == 0 {
            return Err(Error::Config("wide pathway must have at least one layer".into()));
        }
        let mut channels = None::<usize>;
        for (i, s) in self.stages.iter().enumerate() {
            if s.layers == 0 || s.out_channels == 0 || s.stride == 0 {
                return Err(Error::Config(format!("stage {i} has an empty dimension")));
            }
            if s.kernel % 2 == 0 {
                return Err(Error::Config(format!("stage {i} kernel {} is even", s.kernel)));
            }
            if let StageOp::FusedMbConv { expand } = s.op {
                if !(1..=2).contains(&expand) {
                    return Err(Error::Config(format!("stage {i} expansion {expand}")));
                }
                let Some(c_in) = channels else {
                    return Err(Error::Config("the first stage must be a plain convolution".into()));
                };
                // every layer's expanded width feeds squeeze-excite
                for c in [c_in, s.out_channels] {
                    if (c * expand) % 4 != 0 {
                        return Err(Error::Config(format!(
                            "stage {i}: expanded width {} not divisible by 4",
                            c * expand
                        )));
                    }
                }
            }
            channels = Some(s.out_channels);
        }
        Ok(())
    }

    /// Output `(channels, frames)` of every stage for an input of `frames` samples.
    pub fn stage_shapes(&self, frames: usize) -> Vec<(usize, usize)> {
        let mut w = frames;
        self.stages
            .iter()
            .map(|s| {
                w = w.div_ceil(s.stride);
                (s.out_channels, w)
            })
            .collect()
    }
}
