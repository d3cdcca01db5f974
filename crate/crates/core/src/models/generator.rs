use udfe_nn::layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Ctx, Embedding, Linear};
use udfe_nn::ops::ConvGeometry;
use udfe_nn::{Init, Mode, NnError, ParamStore, Result, Scalar, Tape, Var};

use super::config::{ModelConfig, Stem};
use crate::dfe::DfeBlock;

const K3: ConvGeometry = ConvGeometry { kernel: 3, stride: 1, padding: 1 };
const DOWN: ConvGeometry = ConvGeometry { kernel: 3, stride: 2, padding: 1 };
const UP: ConvGeometry = ConvGeometry { kernel: 4, stride: 2, padding: 1 };

/// Test hooks that alter the forward pass without touching parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeneratorHooks {
    /// Treat every DFE block as the identity.
    pub bypass_dfe: bool,
    /// Replace skip `i` (0 = stem output) with zeros.
    pub zero_skip: Option<usize>,
}

#[derive(Debug, Clone)]
struct Stage<L> {
    layer: L,
    norm: BatchNorm2d,
    dfe: Option<DfeBlock>,
}

#[derive(Debug, Clone)]
struct StemLayers {
    project: Linear,
    norm: BatchNorm2d,
    up: Vec<(ConvTranspose2d, BatchNorm2d)>,
    side: usize,
}

/// Layer graph of the generator. Parameters live in a separate store.
#[derive(Debug, Clone)]
pub struct GeneratorNet {
    pub config: ModelConfig,
    pub embedding: Embedding,
    stem: StemLayers,
    encoder: Vec<Stage<Conv2d>>,
    bottleneck: (Conv2d, BatchNorm2d),
    /// `decoder[j]` upsamples from level `L - j` to `L - j - 1`.
    decoder: Vec<Stage<ConvTranspose2d>>,
    output: Conv2d,
}

impl GeneratorNet {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Init, config: &ModelConfig) -> Result<Self> {
        let c = config;
        let w0 = c.width(0);
        let embedding = Embedding::new(store, init, "gen.embed", c.num_classes, c.embedding_dim)?;

        let (side, n_up) = match c.stem {
            Stem::Upsample => (c.image_size / 4, 2),
            Stem::Direct => (c.image_size, 0),
        };
        let project = Linear::new(store, init, "gen.stem.project", c.noise_dim + c.embedding_dim, w0 * side * side)?;
        let norm = BatchNorm2d::new(store, "gen.stem.bn", w0)?;
        let up = (0..n_up)
            .map(|i| {
                Ok((
                    ConvTranspose2d::new(store, init, &format!("gen.stem.up{i}"), w0, w0, UP)?,
                    BatchNorm2d::new(store, &format!("gen.stem.up{i}.bn"), w0)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let stem = StemLayers { project, norm, up, side };

        let dfe = |store: &mut ParamStore<T>, name: String, ch: usize| -> Result<Option<DfeBlock>> {
            if c.use_dfe {
                Ok(Some(DfeBlock::new(store, init, &name, ch, c.reduction_ratio)?))
            } else {
                Ok(None)
            }
        };

        let mut encoder = Vec::with_capacity(c.levels);
        for i in 1..=c.levels {
            let name = format!("gen.enc{i}");
            encoder.push(Stage {
                layer: Conv2d::new(store, init, &format!("{name}.conv"), c.width(i - 1), c.width(i), DOWN)?,
                norm: BatchNorm2d::new(store, &format!("{name}.bn"), c.width(i))?,
                dfe: dfe(store, format!("{name}.dfe"), c.width(i))?,
            });
        }
        let wl = c.width(c.levels);
        let bottleneck = (
            Conv2d::new(store, init, "gen.mid.conv", wl, wl, K3)?,
            BatchNorm2d::new(store, "gen.mid.bn", wl)?,
        );
        let mut decoder = Vec::with_capacity(c.levels);
        for i in (1..=c.levels).rev() {
            let name = format!("gen.dec{i}");
            decoder.push(Stage {
                layer: ConvTranspose2d::new(store, init, &format!("{name}.up"), 2 * c.width(i), c.width(i - 1), UP)?,
                norm: BatchNorm2d::new(store, &format!("{name}.bn"), c.width(i - 1))?,
                dfe: dfe(store, format!("{name}.dfe"), c.width(i - 1))?,
            });
        }
        let output = Conv2d::new(store, init, "gen.out", 2 * w0, 1, K3)?;
        Ok(Self {
            config: config.clone(),
            embedding,
            stem,
            encoder,
            bottleneck,
            decoder,
            output,
        })
    }

    /// `z: [B, noise_dim]` and one label per row → `[B,1,S,S]` in `(-1,1)`.
    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, z: Var, labels: &[usize]) -> Result<Var> {
        self.forward_with(cx, z, labels, GeneratorHooks::default())
    }

    pub fn forward_with<T: Scalar>(
        &self,
        cx: &mut Ctx<'_, T>,
        z: Var,
        labels: &[usize],
        hooks: GeneratorHooks,
    ) -> Result<Var> {
        let c = &self.config;
        let zs = cx.tape.value(z).shape().to_vec();
        if zs.len() != 2 || zs[1] != c.noise_dim || zs[0] != labels.len() {
            return Err(NnError::Shape {
                op: "generator",
                detail: format!("noise {zs:?} with {} labels, noise_dim {}", labels.len(), c.noise_dim),
            });
        }
        if !cx.tape.value(z).all_finite() {
            return Err(NnError::NonFinite("generator noise".into()));
        }
        let b = labels.len();
        let e = self.embedding.lookup(cx, labels)?;
        let h = cx.tape.concat(&[z, e], 1)?;
        let h = self.stem.project.forward(cx, h)?;
        let s = self.stem.side;
        let h = cx.tape.reshape(h, &[b, c.width(0), s, s])?;
        let h = self.stem.norm.forward(cx, h)?;
        let mut h = cx.tape.relu(h);
        for (up, bn) in &self.stem.up {
            let u = up.forward(cx, h)?;
            let u = bn.forward(cx, u)?;
            h = cx.tape.relu(u);
        }

        let enhance = |cx: &mut Ctx<'_, T>, dfe: &Option<DfeBlock>, x: Var| match dfe {
            Some(block) if !hooks.bypass_dfe => block.forward(cx, x),
            _ => Ok(x),
        };

        let mut skips = vec![h];
        for stage in &self.encoder {
            let x = stage.layer.forward(cx, h)?;
            let x = stage.norm.forward(cx, x)?;
            let x = cx.tape.relu(x);
            h = enhance(cx, &stage.dfe, x)?;
            skips.push(h);
        }
        if let Some(i) = hooks.zero_skip {
            if i < skips.len() {
                let zeroed = cx.tape.scale(skips[i], 0.0);
                skips[i] = zeroed;
            }
        }

        let x = self.bottleneck.0.forward(cx, h)?;
        let x = self.bottleneck.1.forward(cx, x)?;
        let mut d = cx.tape.relu(x);
        for (j, stage) in self.decoder.iter().enumerate() {
            let level = c.levels - j;
            let x = cx.tape.concat(&[d, skips[level]], 1)?;
            let x = stage.layer.forward(cx, x)?;
            let x = stage.norm.forward(cx, x)?;
            let x = cx.tape.relu(x);
            d = enhance(cx, &stage.dfe, x)?;
        }
        let x = cx.tape.concat(&[d, skips[0]], 1)?;
        let x = self.output.forward(cx, x)?;
        Ok(cx.tape.tanh(x))
    }
}

/// Generator layers together with their parameters.
#[derive(Debug, Clone)]
pub struct Generator<T: Scalar = f32> {
    pub net: GeneratorNet,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn new(config: &ModelConfig, init: &Init) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = GeneratorNet::new(&mut params, init, config)?;
        Ok(Self { net, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn forward(&mut self, tape: &mut Tape<T>, mode: Mode, z: Var, labels: &[usize]) -> Result<Var> {
        let mut cx = Ctx::new(tape, &mut self.params, mode);
        self.net.forward(&mut cx, z, labels)
    }

    pub fn forward_with(
        &mut self,
        tape: &mut Tape<T>,
        mode: Mode,
        z: Var,
        labels: &[usize],
        hooks: GeneratorHooks,
    ) -> Result<Var> {
        let mut cx = Ctx::new(tape, &mut self.params, mode);
        self.net.forward_with(&mut cx, z, labels, hooks)
    }

    /// Same network with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> Generator<U> {
        Generator {
            net: self.net.clone(),
            params: self.params.cast(),
        }
    }
}
