//! Procedural power-Doppler-like phantoms.
//!
//! Each frame holds 3–6 branching random-walk vessel trees descending from
//! the cortical surface at the top edge, Gaussian-blurred onto a dark
//! background. Task-state frames add a fixed intensity offset inside a
//! centered disc of radius `size / 6`. Every frame gets independent pixel
//! noise. Frame `i` draws from its own ChaCha stream, so the set is
//! identical regardless of how it is generated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use udfe_nn::{parallel, Tensor};

use super::{DataError, DataResult, FusSample, State, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub size: usize,
    pub seed: u64,
    pub task: Task,
    pub min_trees: usize,
    pub max_trees: usize,
    pub branch_prob: f64,
    pub blur_sigma: f64,
    pub roi_offset: f32,
    pub noise_std: f64,
    /// Peak vessel brightness above the background.
    pub vessel_contrast: f64,
}

impl SynthSpec {
    pub fn new(n_per_class: usize, size: usize, seed: u64) -> Self {
        Self {
            n_per_class,
            size,
            seed,
            task: Task::Piano,
            min_trees: 3,
            max_trees: 6,
            branch_prob: 0.15,
            blur_sigma: 1.0,
            roi_offset: 0.3,
            noise_std: 0.05,
            vessel_contrast: 0.4,
        }
    }

    pub fn roi_radius(&self) -> f64 {
        self.size as f64 / 6.0
    }

    /// Whether pixel `(y, x)` lies in the activated region.
    pub fn in_roi(&self, y: usize, x: usize) -> bool {
        let c = (self.size as f64 - 1.0) / 2.0;
        let (dy, dx) = (y as f64 - c, x as f64 - c);
        dy * dy + dx * dx <= self.roi_radius().powi(2)
    }
}

const BACKGROUND: f32 = -0.8;
const VESSEL_GAIN: f64 = 2.0;
const MAX_WALKERS_PER_TREE: usize = 32;
const MAX_GENERATION: u32 = 3;

struct Walker {
    x: f64,
    y: f64,
    heading: f64,
    intensity: f64,
    steps: usize,
    generation: u32,
}

fn splat(canvas: &mut [f64], size: usize, x: f64, y: f64, v: f64) {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (px, py) = (x0 as i64 + dx, y0 as i64 + dy);
            if px >= 0 && py >= 0 && (px as usize) < size && (py as usize) < size {
                canvas[py as usize * size + px as usize] += v * wx * wy;
            }
        }
    }
}

fn draw_tree(canvas: &mut [f64], spec: &SynthSpec, rng: &mut ChaCha8Rng) {
    let s = spec.size as f64;
    let jitter = Normal::new(0.0, 0.15).expect("valid sigma");
    let mut stack = vec![Walker {
        x: rng.random_range(0.1 * s..0.9 * s),
        y: rng.random_range(0.0..0.15 * s),
        heading: std::f64::consts::FRAC_PI_2 + rng.random_range(-0.5..0.5),
        intensity: 1.0,
        steps: (s * rng.random_range(0.6..1.0)) as usize,
        generation: 0,
    }];
    let mut spawned = 1;
    while let Some(mut w) = stack.pop() {
        for _ in 0..w.steps {
            w.x += w.heading.cos();
            w.y += w.heading.sin();
            if w.x < 0.0 || w.y < 0.0 || w.x >= s || w.y >= s {
                break;
            }
            w.heading += jitter.sample(rng);
            splat(canvas, spec.size, w.x, w.y, w.intensity);
            if rng.random_bool(spec.branch_prob)
                && w.generation < MAX_GENERATION
                && spawned < MAX_WALKERS_PER_TREE
            {
                let turn = rng.random_range(0.4..0.9) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                stack.push(Walker {
                    x: w.x,
                    y: w.y,
                    heading: w.heading + turn,
                    intensity: w.intensity * 0.7,
                    steps: (w.steps as f64 * 0.6) as usize,
                    generation: w.generation + 1,
                });
                spawned += 1;
            }
        }
    }
}

/// Separable Gaussian blur with edge clamping, kernel radius `ceil(3σ)`.
pub(crate) fn gaussian_blur(src: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= norm);
    let clamp = |i: i64| i.clamp(0, size as i64 - 1) as usize;
    let mut tmp = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = (-r..=r)
                .map(|d| k[(d + r) as usize] * src[y * size + clamp(x as i64 + d)])
                .sum();
        }
    }
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = (-r..=r)
                .map(|d| k[(d + r) as usize] * tmp[clamp(y as i64 + d) * size + x])
                .sum();
        }
    }
    out
}

fn render(spec: &SynthSpec, state: State, stream: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let n = spec.size;
    let mut canvas = vec![0.0; n * n];
    for _ in 0..rng.random_range(spec.min_trees..=spec.max_trees) {
        draw_tree(&mut canvas, spec, &mut rng);
    }
    let blurred = gaussian_blur(&canvas, n, spec.blur_sigma);
    let noise = Normal::new(0.0, spec.noise_std.max(0.0)).expect("valid sigma");
    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let vessel = (VESSEL_GAIN * blurred[y * n + x]).min(1.0);
            let mut v = BACKGROUND as f64 + spec.vessel_contrast * vessel;
            if state == State::Task && spec.in_roi(y, x) {
                v += spec.roi_offset as f64;
            }
            v += noise.sample(&mut rng);
            data.push(v.clamp(-1.0, 1.0) as f32);
        }
    }
    Tensor::new(vec![1, n, n], data).expect("synth shape")
}

/// `n_per_class` rest frames followed by `n_per_class` task frames.
pub fn synth_generate(spec: &SynthSpec) -> DataResult<Vec<FusSample>> {
    if spec.size < 32 {
        return Err(DataError::Invalid(format!("synthetic size {} is below 32", spec.size)));
    }
    if spec.min_trees == 0 || spec.min_trees > spec.max_trees || !(0.0..=1.0).contains(&spec.branch_prob) {
        return Err(DataError::Invalid("inconsistent synthetic tree parameters".into()));
    }
    let n = spec.n_per_class;
    Ok(parallel::map_range(2 * n, |i| {
        let state = if i < n { State::Rest } else { State::Task };
        FusSample::new(render(spec, state, i as u64), spec.task, state)
    }))
}
