//! Finite-difference verification of tape gradients.
//!
//! Runs in `f64`. Each checked coordinate is perturbed by `±step` and the
//! central difference is compared with the reverse-mode value using
//! `|a - n| / max(|a|, |n|, abs_floor)`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::params::{ParamKind, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub step: f64,
    /// Denominator floor so near-zero gradients are compared absolutely.
    pub abs_floor: f64,
    /// Check at most this many randomly chosen coordinates per tensor.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            abs_floor: 1e-6,
            max_coords_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords_checked: usize,
    /// `(tensor label, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub pass: bool,
}

impl GradCheckReport {
    fn new() -> Self {
        Self {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            coords_checked: 0,
            worst: None,
            pass: false,
        }
    }

    fn record(&mut self, cfg: &GradCheckConfig, label: &str, index: usize, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
        self.coords_checked += 1;
        self.max_abs_error = self.max_abs_error.max(abs);
        let rel = if rel.is_finite() { rel } else { f64::INFINITY };
        if rel > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = rel;
            self.worst = Some((label.to_string(), index));
        }
    }
}

fn coords(cfg: &GradCheckConfig, len: usize, salt: u64) -> Vec<usize> {
    match cfg.max_coords_per_tensor {
        Some(k) if k < len => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut idx = sample(&mut rng, len, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..len).collect(),
    }
}

fn scalar_of(tape: &Tape<f64>, v: Var) -> Result<f64> {
    let t = tape.value(v);
    t.item().ok_or_else(|| NnError::NotScalar(t.shape().to_vec()))
}

/// Check `f` with respect to every input tensor, each placed on the tape as
/// a gradient-tracking leaf.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    grad_check_with(&GradCheckConfig::default(), f, inputs, tolerance)
}

pub fn grad_check_with<F>(
    cfg: &GradCheckConfig,
    mut f: F,
    inputs: &[Tensor<f64>],
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    fn eval<F>(f: &mut F, values: &[Tensor<f64>]) -> Result<f64>
    where
        F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)
    }

    let analytic: Vec<Tensor<f64>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)?;
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.wrt(v)).collect()
    };

    let mut values = inputs.to_vec();
    let mut report = GradCheckReport::new();
    for ti in 0..values.len() {
        let label = format!("input{ti}");
        for i in coords(cfg, values[ti].len(), ti as u64) {
            let orig = values[ti].data()[i];
            values[ti].data_mut()[i] = orig + cfg.step;
            let plus = eval(&mut f, &values)?;
            values[ti].data_mut()[i] = orig - cfg.step;
            let minus = eval(&mut f, &values)?;
            values[ti].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            report.record(cfg, &label, i, analytic[ti].data()[i], numeric);
        }
    }
    report.pass = report.max_rel_error < tolerance;
    Ok(report)
}

/// Check every trainable entry of `stores` under the scalar function `f`.
pub fn grad_check_params<F>(
    cfg: &GradCheckConfig,
    mut f: F,
    stores: &mut [ParamStore<f64>],
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &mut [ParamStore<f64>]) -> Result<Var>,
{
    let analytic: Vec<Vec<Option<Tensor<f64>>>> = {
        let mut tape = Tape::new();
        let out = f(&mut tape, stores)?;
        scalar_of(&tape, out)?;
        let grads = tape.backward(out)?;
        stores.iter().map(|s| grads.for_store(s).grads).collect()
    };

    let mut report = GradCheckReport::new();
    for si in 0..stores.len() {
        for id in stores[si].ids().collect::<Vec<_>>() {
            let entry = stores[si].entry(id);
            if entry.kind != ParamKind::Trainable {
                continue;
            }
            let label = entry.name.clone();
            let len = entry.tensor.len();
            let ga = analytic[si][id.0].as_ref().expect("trainable gradient");
            for i in coords(cfg, len, (si * 1_000_003 + id.0) as u64) {
                let orig = stores[si].get(id).data()[i];
                stores[si].get_mut(id).data_mut()[i] = orig + cfg.step;
                let plus = {
                    let mut tape = Tape::new();
                    let out = f(&mut tape, stores)?;
                    scalar_of(&tape, out)?
                };
                stores[si].get_mut(id).data_mut()[i] = orig - cfg.step;
                let minus = {
                    let mut tape = Tape::new();
                    let out = f(&mut tape, stores)?;
                    scalar_of(&tape, out)?
                };
                stores[si].get_mut(id).data_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * cfg.step);
                report.record(cfg, &label, i, ga.data()[i], numeric);
            }
        }
    }
    report.pass = report.max_rel_error < tolerance;
    Ok(report)
}
