use udfe_nn::layers::{BatchNorm2d, ConditionalBatchNorm2d, Conv2d, ConvTranspose2d, Ctx, Embedding, Linear};
use udfe_nn::ops::{ConvGeometry, PoolKind};
use udfe_nn::{Init, Mode, NnError, ParamStore, Result, Scalar, Tape, Var};

use super::config::ModelConfig;

const K3: ConvGeometry = ConvGeometry { kernel: 3, stride: 1, padding: 1 };
const DOWN: ConvGeometry = ConvGeometry { kernel: 3, stride: 2, padding: 1 };
const UP: ConvGeometry = ConvGeometry { kernel: 4, stride: 2, padding: 1 };
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
enum EncoderNorm {
    Plain(BatchNorm2d),
    Conditional(ConditionalBatchNorm2d),
}

#[derive(Debug, Clone)]
pub struct DiscriminatorNet {
    pub config: ModelConfig,
    /// Present only when the encoder uses conditional batch norm.
    pub embedding: Option<Embedding>,
    input: Conv2d,
    encoder: Vec<(Conv2d, EncoderNorm)>,
    global_hidden: Linear,
    global_out: Linear,
    /// `decoder[j]` upsamples from level `L - j` to `L - j - 1`.
    decoder: Vec<(ConvTranspose2d, BatchNorm2d)>,
    local_out: Conv2d,
}

/// Both heads for one batch.
#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorOutput {
    /// `[B]`
    pub global: Var,
    /// `[B,1,S,S]`
    pub local: Var,
}

impl DiscriminatorNet {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Init, config: &ModelConfig) -> Result<Self> {
        let c = config;
        let embedding = if c.use_cbatchnorm {
            Some(Embedding::new(store, init, "disc.embed", c.num_classes, c.embedding_dim)?)
        } else {
            None
        };
        let input = Conv2d::new(store, init, "disc.in", 1, c.width(0), K3)?;
        let mut encoder = Vec::with_capacity(c.levels);
        for i in 1..=c.levels {
            let name = format!("disc.enc{i}");
            let conv = Conv2d::new(store, init, &format!("{name}.conv"), c.width(i - 1), c.width(i), DOWN)?;
            let norm = if c.use_cbatchnorm {
                EncoderNorm::Conditional(ConditionalBatchNorm2d::new(
                    store,
                    init,
                    &format!("{name}.cbn"),
                    c.width(i),
                    c.embedding_dim,
                )?)
            } else {
                EncoderNorm::Plain(BatchNorm2d::new(store, &format!("{name}.bn"), c.width(i))?)
            };
            encoder.push((conv, norm));
        }
        let wl = c.width(c.levels);
        let global_hidden = Linear::new(store, init, "disc.global.hidden", wl, wl)?;
        let global_out = Linear::new(store, init, "disc.global.out", wl, 1)?;
        let mut decoder = Vec::with_capacity(c.levels);
        for i in (1..=c.levels).rev() {
            let cin = if i == c.levels { c.width(i) } else { 2 * c.width(i) };
            let name = format!("disc.dec{i}");
            decoder.push((
                ConvTranspose2d::new(store, init, &format!("{name}.up"), cin, c.width(i - 1), UP)?,
                BatchNorm2d::new(store, &format!("{name}.bn"), c.width(i - 1))?,
            ));
        }
        let local_out = Conv2d::new(store, init, "disc.local.out", 2 * c.width(0), 1, K3)?;
        Ok(Self {
            config: config.clone(),
            embedding,
            input,
            encoder,
            global_hidden,
            global_out,
            decoder,
            local_out,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        cx: &mut Ctx<'_, T>,
        image: Var,
        labels: &[usize],
    ) -> Result<DiscriminatorOutput> {
        let c = &self.config;
        let s = cx.tape.value(image).shape().to_vec();
        let b = labels.len();
        if s != [b, 1, c.image_size, c.image_size] {
            return Err(NnError::Shape {
                op: "discriminator",
                detail: format!("expected [{b},1,{0},{0}], got {s:?}", c.image_size),
            });
        }
        let e = match &self.embedding {
            Some(emb) => Some(emb.lookup(cx, labels)?),
            None => None,
        };
        let x = self.input.forward(cx, image)?;
        let mut h = cx.tape.leaky_relu(x, LEAKY_SLOPE);
        let mut feats = vec![h];
        for (conv, norm) in &self.encoder {
            let x = conv.forward(cx, h)?;
            let x = match (norm, e) {
                (EncoderNorm::Conditional(n), Some(e)) => n.forward(cx, x, e)?,
                (EncoderNorm::Plain(n), _) => n.forward(cx, x)?,
                (EncoderNorm::Conditional(_), None) => unreachable!("embedding exists with cbatchnorm"),
            };
            h = cx.tape.leaky_relu(x, LEAKY_SLOPE);
            feats.push(h);
        }

        let wl = c.width(c.levels);
        let g = cx.tape.pool(h, PoolKind::SpatialGlobalAvg)?;
        let g = cx.tape.reshape(g, &[b, wl])?;
        let g = self.global_hidden.forward(cx, g)?;
        let g = cx.tape.leaky_relu(g, LEAKY_SLOPE);
        let g = self.global_out.forward(cx, g)?;
        let global = cx.tape.reshape(g, &[b])?;

        let mut u = h;
        for (j, (up, bn)) in self.decoder.iter().enumerate() {
            let level = c.levels - j;
            let x = if j == 0 { u } else { cx.tape.concat(&[u, feats[level]], 1)? };
            let x = up.forward(cx, x)?;
            let x = bn.forward(cx, x)?;
            u = cx.tape.leaky_relu(x, LEAKY_SLOPE);
        }
        let x = cx.tape.concat(&[u, feats[0]], 1)?;
        let local = self.local_out.forward(cx, x)?;
        Ok(DiscriminatorOutput { global, local })
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator<T: Scalar = f32> {
    pub net: DiscriminatorNet,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(config: &ModelConfig, init: &Init) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = DiscriminatorNet::new(&mut params, init, config)?;
        Ok(Self { net, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        mode: Mode,
        image: Var,
        labels: &[usize],
    ) -> Result<DiscriminatorOutput> {
        let mut cx = Ctx::new(tape, &mut self.params, mode);
        self.net.forward(&mut cx, image, labels)
    }

    pub fn cast<U: Scalar>(&self) -> Discriminator<U> {
        Discriminator {
            net: self.net.clone(),
            params: self.params.cast(),
        }
    }
}
