//! Detail feature enhancement block.
//!
//! Three pooling branches feed one attention map:
//!
//! * spatial global average pool → shared 1×1 bottleneck (width `C / r`,
//!   ReLU) → per-channel logits `[B,C,1,1]`;
//! * channel-axis max and channel-axis mean → concatenated `[B,2,H,W]` →
//!   1×1 fusion → per-pixel logits `[B,1,H,W]`.
//!
//! `A = sigmoid(channel_logits + spatial_logits)` broadcast to `[B,C,H,W]`,
//! and the block returns `x + x ⊙ A`.
//!
//! Whether all three branches were meant to yield channel descriptors is
//! ambiguous in the original description; this channel + spatial split is
//! the construction the tests pin.

use udfe_nn::layers::{Conv2d, Ctx};
use udfe_nn::ops::{ConvGeometry, PoolKind};
use udfe_nn::{Init, NnError, ParamStore, Result, Scalar, Var};

pub const DEFAULT_REDUCTION_RATIO: usize = 8;

#[derive(Debug, Clone)]
pub struct DfeBlock {
    pub channels: usize,
    pub reduction_ratio: usize,
    /// Bottleneck `C → max(1, C/r)`.
    pub squeeze: Conv2d,
    /// Bottleneck `max(1, C/r) → C`.
    pub excite: Conv2d,
    /// Fusion of the `[max, mean]` channel maps to one logit map.
    pub spatial: Conv2d,
}

/// Logits of the two attention paths before they are combined.
pub struct AttentionLogits {
    pub channel: Var,
    pub spatial: Var,
}

impl DfeBlock {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &Init,
        name: &str,
        channels: usize,
        reduction_ratio: usize,
    ) -> Result<Self> {
        if channels == 0 || reduction_ratio == 0 {
            return Err(NnError::InvalidArgument {
                op: "dfe",
                detail: "channels and reduction_ratio must be positive".into(),
            });
        }
        let hidden = (channels / reduction_ratio).max(1);
        let one = ConvGeometry::new(1, 1, 0);
        Ok(Self {
            channels,
            reduction_ratio,
            squeeze: Conv2d::new(store, init, &format!("{name}.squeeze"), channels, hidden, one)?,
            excite: Conv2d::new(store, init, &format!("{name}.excite"), hidden, channels, one)?,
            spatial: Conv2d::new(store, init, &format!("{name}.spatial"), 2, 1, one)?,
        })
    }

    fn check<T: Scalar>(&self, cx: &Ctx<'_, T>, x: Var) -> Result<()> {
        let shape = cx.tape.value(x).shape();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(NnError::Shape {
                op: "dfe",
                detail: format!("expected [B,{},H,W], got {shape:?}", self.channels),
            });
        }
        Ok(())
    }

    pub fn attention_logits<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<AttentionLogits> {
        self.check(cx, x)?;
        let gap = cx.tape.pool(x, PoolKind::SpatialGlobalAvg)?;
        let h = self.squeeze.forward(cx, gap)?;
        let h = cx.tape.relu(h);
        let channel = self.excite.forward(cx, h)?;

        let cmax = cx.tape.pool(x, PoolKind::ChannelMax)?;
        let cmean = cx.tape.pool(x, PoolKind::ChannelMean)?;
        let both = cx.tape.concat(&[cmax, cmean], 1)?;
        let spatial = self.spatial.forward(cx, both)?;
        Ok(AttentionLogits { channel, spatial })
    }

    /// The attention map `A ∈ (0,1)^{B,C,H,W}` used by [`forward`](Self::forward).
    pub fn attention_map<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let logits = self.attention_logits(cx, x)?;
        let z = cx.tape.add(logits.channel, logits.spatial)?;
        Ok(cx.tape.sigmoid(z))
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let a = self.attention_map(cx, x)?;
        let gated = cx.tape.mul(x, a)?;
        cx.tape.add(x, gated)
    }
}
