use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use udfe_core::data::{encode_pgm, make_splits, save_manifest, synth_generate, FusSample, ManifestEntry, Split, SplitCounts, SynthSpec};
use udfe_core::downstream::{
    augmentation_experiment, fit_and_evaluate, write_report_csv, ClassificationReport, LabeledSet, RfParams, DEFAULT_PCA_K,
};
use udfe_core::experiment::{run_ablation, write_ablation_csv};
use udfe_core::metrics::{fid, fid_features, load_features, ms_ssim_min_size, ms_ssim_scales, paired_mean, ssim, Pool16, MS_SSIM_WEIGHTS};
use udfe_core::models::ModelConfig;
use udfe_core::training::{load_checkpoint, save_checkpoint, write_loss_csv, RunConfig, Trainer};
use udfe_nn::Tensor;

use crate::config::Config;
use crate::dataset::{self, MANIFEST_NAME};
use crate::{Extractor, Failure};

/// Pixel range of `[-1,1]` frames.
const DYNAMIC_RANGE: f64 = 2.0;
const DEFAULT_N_PER_CLASS: usize = 40;
const DEFAULT_DATA_SEED: u64 = 2024;

fn write_with<F>(path: &Path, body: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let err = |e| Failure::output(path.display(), e);
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    body(&mut w).map_err(err)?;
    w.flush().map_err(err)
}

fn write_pgm_file(path: &Path, image: &Tensor<f32>) -> Result<(), Failure> {
    let bytes = encode_pgm(image)?;
    std::fs::write(path, bytes).map_err(|e| Failure::output(path.display(), e))
}

fn trainer_from(checkpoint: &Path) -> Result<Trainer, Failure> {
    Ok(Trainer::from_checkpoint(load_checkpoint(checkpoint, None)?)?)
}

pub fn train(cfg: &Config, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let model = cfg.model(ModelConfig::default())?;
    let mut run = cfg.run(RunConfig::default())?;
    if let Some(s) = seed {
        run.seed = s;
    }
    let data = match cfg.path("data.manifest") {
        Some(manifest) => {
            let crop = cfg.get("data.crop")?.unwrap_or(model.image_size);
            dataset::load(&manifest, Some(Split::Train), Some(crop))?
        }
        None => {
            let n = cfg.get("data.n_per_class")?.unwrap_or(DEFAULT_N_PER_CLASS);
            let data_seed = cfg.get("data.seed")?.unwrap_or(DEFAULT_DATA_SEED);
            synth_generate(&SynthSpec::new(n, model.image_size, data_seed))?
        }
    };
    log::info!("training {} steps on {} frames, seed {}", run.steps, data.len(), run.seed);
    let mut trainer = Trainer::new(model, run)?;
    let losses = trainer.train(&data)?;
    write_with(&out.join("losses.csv"), |w| write_loss_csv(w, &losses))?;
    let ck_dir = out.join("checkpoint");
    save_checkpoint(&ck_dir, &trainer.to_checkpoint()).map_err(|e| Failure::output(ck_dir.display(), e))?;
    if let Some(last) = losses.last() {
        log::info!("step {}: d_loss {:.4} g_loss {:.4}", last.step, last.d_loss, last.g_loss);
    }
    Ok(())
}

pub fn generate(checkpoint: &Path, n: usize, label: usize, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    if n == 0 {
        return Err(Failure::Config("`--n`: must be positive".into()));
    }
    let mut trainer = trainer_from(checkpoint)?;
    let classes = trainer.config.num_classes;
    if label >= classes {
        return Err(Failure::Config(format!("`--label`: {label} is out of range for {classes} classes")));
    }
    let images = trainer.generate(&vec![label; n], seed.unwrap_or(0))?;
    for (i, img) in images.iter().enumerate() {
        write_pgm_file(&out.join(format!("gen_{label}_{i:04}.pgm")), img)?;
    }
    log::info!("wrote {n} frames of class {label}");
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub cfg: &'a Config,
    pub real: &'a Path,
    pub fake: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    pub extractor: Extractor,
    pub real_features: Option<&'a Path>,
    pub fake_features: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

/// Most MS-SSIM scales an `h × w` pair supports.
pub fn max_scales(h: usize, w: usize) -> Option<usize> {
    (1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&s| h.min(w) >= ms_ssim_min_size(s) && h.is_multiple_of(1 << (s - 1)) && w.is_multiple_of(1 << (s - 1)))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    let mut crop: Option<usize> = a.cfg.get("data.crop")?;
    let mut trainer = match a.checkpoint {
        Some(dir) => {
            let t = trainer_from(dir)?;
            crop.get_or_insert(t.config.image_size);
            Some(t)
        }
        None => None,
    };
    let real_samples = dataset::load(a.real, None, crop)?;
    let real: Vec<Tensor<f32>> = real_samples.iter().map(|s| s.image.clone()).collect();
    let fake: Vec<Tensor<f32>> = match (a.fake, trainer.as_mut()) {
        (Some(path), _) => dataset::load(path, None, crop)?.into_iter().map(|s| s.image).collect(),
        (None, Some(t)) => {
            let labels: Vec<usize> = real_samples.iter().map(|s| s.label).collect();
            t.generate(&labels, a.seed.unwrap_or(0))?
        }
        (None, None) => return Err(Failure::Config("one of `--fake` or `--checkpoint` is required".into())),
    };

    let ssim_mean = paired_mean(&real, &fake, |x, y| ssim(x, y, DYNAMIC_RANGE))?;
    let (h, w) = match *real[0].shape() {
        [_, h, w] => (h, w),
        _ => unreachable!("loaded images are [1,H,W]"),
    };
    let scales = max_scales(h, w)
        .ok_or_else(|| Failure::Config(format!("{h}x{w} frames are too small for MS-SSIM")))?;
    log::info!("MS-SSIM over {scales} scales");
    let ms_mean = paired_mean(&real, &fake, |x, y| ms_ssim_scales(x, y, DYNAMIC_RANGE, scales))?;
    let fid_value = match a.extractor {
        Extractor::Pool16 => fid(&real, &fake, &Pool16)?,
        Extractor::External => {
            let (Some(r), Some(f)) = (a.real_features, a.fake_features) else {
                return Err(Failure::Config(
                    "`--extractor external` needs `--real-features` and `--fake-features`".into(),
                ));
            };
            fid_features(&load_features(r)?, &load_features(f)?)?
        }
    };
    write_with(&a.out.join("metrics.csv"), |w| {
        writeln!(w, "metric,value")?;
        writeln!(w, "ssim_mean,{ssim_mean}")?;
        writeln!(w, "ms_ssim_mean,{ms_mean}")?;
        writeln!(w, "fid,{fid_value}")
    })?;
    log::info!("ssim {ssim_mean:.4} ms-ssim {ms_mean:.4} fid {fid_value:.4}");
    Ok(())
}

pub fn classify(
    cfg: &Config,
    train: &Path,
    test: &Path,
    synth: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let crop = cfg.get("data.crop")?;
    let pca_k = cfg.get("downstream.pca_k")?.unwrap_or(DEFAULT_PCA_K);
    let mut rf = cfg.forest(RfParams::default())?;
    if let Some(s) = seed {
        rf.seed = s;
    }
    let labeled = |samples: Vec<FusSample>| LabeledSet::from_samples(&samples);
    let real = labeled(dataset::load(train, Some(Split::Train), crop)?)?;
    let test = labeled(dataset::load(test, Some(Split::Test), crop)?)?;
    let rows = match synth {
        Some(path) => {
            let synth = labeled(dataset::load(path, None, crop)?)?;
            let r = augmentation_experiment(&real, &synth, &test, pca_k, &rf)?;
            let delta = ClassificationReport {
                accuracy: r.augmented.accuracy - r.baseline.accuracy,
                precision: r.augmented.precision - r.baseline.precision,
                recall: r.augmented.recall - r.baseline.recall,
                f1: r.augmented.f1 - r.baseline.f1,
            };
            vec![
                ("real_only".to_string(), r.baseline),
                ("real_plus_synth".to_string(), r.augmented),
                ("delta".to_string(), delta),
            ]
        }
        None => vec![("real_only".to_string(), fit_and_evaluate(&real, &test, pca_k, &rf)?)],
    };
    write_with(&out.join("classify.csv"), |w| write_report_csv(w, &rows))?;
    for (name, r) in &rows {
        log::info!("{name}: accuracy {:.4}", r.accuracy);
    }
    Ok(())
}

pub fn ablate(cfg: &Config, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut spec = cfg.benchmark()?;
    if let Some(s) = seed {
        spec.model_seed = s;
    }
    let outcomes = run_ablation(&spec)?;
    write_with(&out.join("ablation.csv"), |w| write_ablation_csv(w, &spec, &outcomes))?;
    for o in &outcomes {
        write_with(&out.join(format!("losses_{}.csv", o.variant.name())), |w| write_loss_csv(w, &o.losses))?;
    }
    Ok(())
}

pub fn synth(cfg: &Config, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let size = cfg.get("model.image_size")?.unwrap_or(ModelConfig::default().image_size);
    let n = cfg.get("data.n_per_class")?.unwrap_or(DEFAULT_N_PER_CLASS);
    let data_seed = seed.or(cfg.get("data.seed")?).unwrap_or(DEFAULT_DATA_SEED);
    let samples = synth_generate(&SynthSpec::new(n, size, data_seed))?;
    let total = samples.len();
    let n_test = cfg.get("data.n_test")?.unwrap_or(total / 5);
    let n_train = cfg.get("data.n_train")?.unwrap_or(total - n_test.min(total));
    let (train, test) = make_splits(&samples, SplitCounts { train: n_train, test: n_test }, data_seed)?;
    let mut entries = Vec::with_capacity(train.len() + test.len());
    for (split, set, prefix) in [(Split::Train, &train, "train"), (Split::Test, &test, "test")] {
        for (i, s) in set.iter().enumerate() {
            let name = format!("{prefix}_{i:04}.pgm");
            write_pgm_file(&out.join(&name), &s.image)?;
            entries.push(ManifestEntry { path: name.into(), task: s.task, state: s.state, split });
        }
    }
    let manifest = out.join(MANIFEST_NAME);
    save_manifest(&manifest, &entries).map_err(|e| Failure::output(manifest.display(), e))?;
    log::info!("wrote {} training and {} test frames", train.len(), test.len());
    Ok(())
}
