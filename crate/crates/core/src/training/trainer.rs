use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use udfe_nn::{Mode, Tape, Tensor};

use super::adam::{AdamConfig, AdamState};
use super::checkpoint::{Checkpoint, RngState};
use super::losses::{discriminator_loss, generator_loss, GeneratorLossForm};
use crate::data::FusSample;
use crate::error::{config_err, invalid, Error, Result};
use crate::models::{build_models, Discriminator, Generator, ModelConfig};

pub const LOSS_CSV_HEADER: &str = "step,d_loss,g_loss,d_global,d_local";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub d_steps_per_g: usize,
    pub generator_loss: GeneratorLossForm,
    pub adam: AdamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 16,
            seed: 0,
            d_steps_per_g: 1,
            generator_loss: GeneratorLossForm::NonSaturating,
            adam: AdamConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(config_err("batch_size", "batch norm needs at least 2 samples"));
        }
        if self.d_steps_per_g == 0 {
            return Err(config_err("d_steps_per_g", "must be positive"));
        }
        let a = self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(config_err("lr", "must be positive"));
        }
        for (field, b) in [("beta1", a.beta1), ("beta2", a.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(config_err(field, "must lie in [0, 1)"));
            }
        }
        if !(a.eps > 0.0) {
            return Err(config_err("eps", "must be positive"));
        }
        Ok(())
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub d_loss: f32,
    pub g_loss: f32,
    pub d_global: f32,
    pub d_local: f32,
}

impl LossRecord {
    pub fn is_finite(&self) -> bool {
        [self.d_loss, self.g_loss, self.d_global, self.d_local]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub fn write_loss_csv<W: Write>(mut w: W, records: &[LossRecord]) -> std::io::Result<()> {
    writeln!(w, "{LOSS_CSV_HEADER}")?;
    for r in records {
        // `{}` on f32 prints the shortest representation that round-trips.
        writeln!(w, "{},{},{},{},{}", r.step, r.d_loss, r.g_loss, r.d_global, r.d_local)?;
    }
    Ok(())
}

/// Both networks, both optimizers and the sampling RNG.
///
/// A step draws every random quantity (batch indices, noise, generator
/// labels) from one ChaCha stream, so `(seed, config, dataset)` determines
/// the whole run and a restored checkpoint continues it exactly.
pub struct Trainer {
    pub config: ModelConfig,
    pub run: RunConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub g_opt: AdamState,
    pub d_opt: AdamState,
    pub rng: ChaCha8Rng,
    pub step: u64,
}

impl Trainer {
    pub fn new(config: ModelConfig, run: RunConfig) -> Result<Self> {
        run.validate()?;
        let (generator, discriminator) = build_models::<f32>(&config, run.seed)?;
        let g_opt = AdamState::new(run.adam, &generator.params);
        let d_opt = AdamState::new(run.adam, &discriminator.params);
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            run,
            generator,
            discriminator,
            g_opt,
            d_opt,
            rng,
            step: 0,
        })
    }

    fn check_data(&self, data: &[FusSample]) -> Result<()> {
        if data.is_empty() {
            return Err(invalid("training set is empty"));
        }
        let s = self.config.image_size;
        for (i, x) in data.iter().enumerate() {
            if x.label >= self.config.num_classes {
                return Err(invalid(format!("sample {i} has label {} >= num_classes", x.label)));
            }
            if x.image.shape() != [1, s, s] {
                return Err(invalid(format!("sample {i} has shape {:?}, expected [1,{s},{s}]", x.image.shape())));
            }
        }
        Ok(())
    }

    fn noise(&mut self, b: usize) -> Tensor<f32> {
        Tensor::randn(vec![b, self.config.noise_dim], 1.0, &mut self.rng)
    }

    /// Generator output for `labels` without recording gradients.
    fn sample_fake(&mut self, labels: &[usize], mode: Mode) -> Result<Tensor<f32>> {
        let z = self.noise(labels.len());
        let mut tape = Tape::new();
        tape.freeze(&self.generator.params);
        let zv = tape.constant(z);
        let out = self.generator.forward(&mut tape, mode, zv, labels)?;
        Ok(tape.value(out).clone())
    }

    fn real_batch(&mut self, data: &[FusSample]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let b = self.run.batch_size;
        let idx: Vec<usize> = (0..b).map(|_| self.rng.random_range(0..data.len())).collect();
        let images: Vec<Tensor<f32>> = idx.iter().map(|&i| data[i].image.clone()).collect();
        let labels = idx.iter().map(|&i| data[i].label).collect();
        Ok((Tensor::stack(&images)?, labels))
    }

    /// One discriminator update; returns `(total, global, local)`.
    pub fn discriminator_step(&mut self, data: &[FusSample]) -> Result<(f32, f32, f32)> {
        let (real, labels) = self.real_batch(data)?;
        let fake = self.sample_fake(&labels, Mode::Train)?;
        let mut tape = Tape::new();
        let rv = tape.constant(real);
        let fv = tape.constant(fake);
        let d = &mut self.discriminator;
        let out_r = d.forward(&mut tape, Mode::Train, rv, &labels)?;
        let out_f = d.forward(&mut tape, Mode::Train, fv, &labels)?;
        let terms = discriminator_loss(
            &mut tape,
            out_r.global,
            out_f.global,
            out_r.local,
            out_f.local,
            self.config.local_loss_reduction,
        )?;
        let vals = (
            tape.value(terms.total).data()[0],
            tape.value(terms.global).data()[0],
            tape.value(terms.local).data()[0],
        );
        if !(vals.0.is_finite() && vals.1.is_finite() && vals.2.is_finite()) {
            return Err(Error::Numerical(format!("non-finite discriminator loss at step {}", self.step)));
        }
        let grads = tape.backward(terms.total)?.for_store(&d.params);
        self.d_opt.step(&mut d.params, &grads)?;
        Ok(vals)
    }

    /// One generator update through a frozen discriminator.
    pub fn generator_step(&mut self) -> Result<f32> {
        let b = self.run.batch_size;
        let labels: Vec<usize> = (0..b).map(|_| self.rng.random_range(0..self.config.num_classes)).collect();
        let z = self.noise(b);
        let mut tape = Tape::new();
        tape.freeze(&self.discriminator.params);
        let zv = tape.constant(z);
        let fake = self.generator.forward(&mut tape, Mode::Train, zv, &labels)?;
        let out = self.discriminator.forward(&mut tape, Mode::Train, fake, &labels)?;
        let terms = generator_loss(
            &mut tape,
            out.global,
            out.local,
            self.run.generator_loss,
            self.config.local_loss_reduction,
        )?;
        let loss = tape.value(terms.total).data()[0];
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite generator loss at step {}", self.step)));
        }
        let grads = tape.backward(terms.total)?.for_store(&self.generator.params);
        self.g_opt.step(&mut self.generator.params, &grads)?;
        Ok(loss)
    }

    /// `d_steps_per_g` discriminator updates followed by one generator update.
    pub fn train_step(&mut self, data: &[FusSample]) -> Result<LossRecord> {
        self.check_data(data)?;
        let mut d = (0.0, 0.0, 0.0);
        for _ in 0..self.run.d_steps_per_g {
            d = self.discriminator_step(data)?;
        }
        let g = self.generator_step()?;
        if !(self.generator.params.all_finite() && self.discriminator.params.all_finite()) {
            return Err(Error::Numerical(format!("non-finite parameters after step {}", self.step)));
        }
        self.step += 1;
        Ok(LossRecord {
            step: self.step,
            d_loss: d.0,
            g_loss: g,
            d_global: d.1,
            d_local: d.2,
        })
    }

    /// Run until `self.step == until`, returning the log of the steps taken.
    ///
    /// On a numerical failure the error is returned with `self` left at the
    /// last completed step; callers can checkpoint that state.
    pub fn train_until(&mut self, data: &[FusSample], until: u64, log: &mut Vec<LossRecord>) -> Result<()> {
        while self.step < until {
            let rec = self.train_step(data)?;
            if rec.step % 100 == 0 {
                log::info!(
                    "step {} d_loss {:.4} g_loss {:.4}",
                    rec.step,
                    rec.d_loss,
                    rec.g_loss
                );
            }
            log.push(rec);
        }
        Ok(())
    }

    pub fn train(&mut self, data: &[FusSample]) -> Result<Vec<LossRecord>> {
        let mut log = Vec::new();
        let until = self.run.steps;
        self.train_until(data, until, &mut log)?;
        Ok(log)
    }

    /// Eval-mode samples, `z` drawn from `seed`, for the given labels.
    pub fn generate(&mut self, labels: &[usize], seed: u64) -> Result<Vec<Tensor<f32>>> {
        generate_images(&mut self.generator, labels, seed)
    }

    /// Global-head accuracy on `real` against as many eval-mode fakes with
    /// the same labels; a logit above zero means "real".
    pub fn discriminator_accuracy(&mut self, real: &[FusSample], seed: u64) -> Result<f64> {
        self.check_data(real)?;
        let labels: Vec<usize> = real.iter().map(|x| x.label).collect();
        let fakes = self.generate(&labels, seed)?;
        let mut correct = 0usize;
        for (start, chunk) in labels.chunks(64).enumerate().map(|(i, c)| (i * 64, c)) {
            let n = chunk.len();
            let reals: Vec<Tensor<f32>> = real[start..start + n].iter().map(|x| x.image.clone()).collect();
            for (batch, want_real) in [(Tensor::stack(&reals)?, true), (Tensor::stack(&fakes[start..start + n])?, false)] {
                let mut tape = Tape::new();
                tape.freeze(&self.discriminator.params);
                let xv = tape.constant(batch);
                let out = self.discriminator.forward(&mut tape, Mode::Eval, xv, chunk)?;
                correct += tape.value(out.global).data().iter().filter(|&&l| (l > 0.0) == want_real).count();
            }
        }
        Ok(correct as f64 / (2 * real.len()) as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            run: self.run.clone(),
            step: self.step,
            rng: RngState::capture(&self.rng),
            generator: self.generator.params.clone(),
            discriminator: self.discriminator.params.clone(),
            g_opt: self.g_opt.clone(),
            d_opt: self.d_opt.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut t = Trainer::new(ck.config.clone(), ck.run.clone())?;
        t.generator.params.copy_from(&ck.generator)?;
        t.discriminator.params.copy_from(&ck.discriminator)?;
        t.g_opt = ck.g_opt;
        t.d_opt = ck.d_opt;
        t.rng = ck.rng.restore();
        t.step = ck.step;
        Ok(t)
    }
}

/// Eval-mode generator samples in batches of at most 64.
pub fn generate_images(generator: &mut Generator, labels: &[usize], seed: u64) -> Result<Vec<Tensor<f32>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = generator.config().noise_dim;
    let mut out = Vec::with_capacity(labels.len());
    for chunk in labels.chunks(64) {
        let z = Tensor::randn(vec![chunk.len(), nd], 1.0, &mut rng);
        let mut tape = Tape::new();
        tape.freeze(&generator.params);
        let zv = tape.constant(z);
        let y = generator.forward(&mut tape, Mode::Eval, zv, chunk)?;
        out.extend(tape.value(y).unstack());
    }
    Ok(out)
}
