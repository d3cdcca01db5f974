use udfe_core::data::FusSample;
use udfe_core::experiment::{BenchmarkSpec, Variant};
use udfe_core::models::ModelConfig;
use udfe_core::training::checkpoint::{decode, encode};
use udfe_core::training::{
    load_checkpoint, save_checkpoint, write_loss_csv, CheckpointError, LossRecord, RunConfig, Trainer, LOSS_CSV_HEADER,
};

fn small_config() -> ModelConfig {
    ModelConfig {
        image_size: 32,
        levels: 3,
        base_width: 4,
        noise_dim: 8,
        embedding_dim: 8,
        ..ModelConfig::default()
    }
}

fn small_run(steps: u64) -> RunConfig {
    RunConfig { steps, batch_size: 4, seed: 3, ..RunConfig::default() }
}

fn data() -> (Vec<FusSample>, Vec<FusSample>) {
    BenchmarkSpec::default().data().unwrap()
}

fn csv(log: &[LossRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_loss_csv(&mut out, log).unwrap();
    out
}

#[test]
fn smoke_100_steps_benchmark_model() {
    let spec = BenchmarkSpec::default();
    let (train, _) = data();
    let run = RunConfig { steps: 100, ..spec.run_config() };
    assert_eq!(run.batch_size, 8);
    let mut t = Trainer::new(spec.model_config(Variant::Proposed), run).unwrap();
    let log = t.train(&train).unwrap();
    assert_eq!(log.len(), 100);
    assert!(log.iter().all(LossRecord::is_finite));
    assert!(t.generator.params.all_finite() && t.discriminator.params.all_finite());
    let imgs = t.generate(&[0, 1], 5).unwrap();
    assert!(imgs.iter().all(|x| x.data().iter().all(|v| v.abs() < 1.0)));
}

#[test]
fn every_variant_trains_50_steps() {
    let spec = BenchmarkSpec::default();
    let (train, _) = data();
    for v in Variant::ALL {
        let run = RunConfig { steps: 50, ..spec.run_config() };
        let mut t = Trainer::new(spec.model_config(v), run).unwrap();
        let log = t.train(&train).unwrap();
        assert!(log.iter().all(LossRecord::is_finite), "{}", v.name());
    }
}

#[test]
fn same_seed_byte_identical() {
    let (train, _) = data();
    let run_once = || {
        let mut t = Trainer::new(small_config(), small_run(15)).unwrap();
        let log = t.train(&train).unwrap();
        (encode(&t.to_checkpoint()), csv(&log))
    };
    let (a, la) = run_once();
    let (b, lb) = run_once();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(la, lb);

    let mut other = Trainer::new(small_config(), RunConfig { seed: 4, ..small_run(15) }).unwrap();
    other.train(&train).unwrap();
    assert_ne!(encode(&other.to_checkpoint()).1, a.1);
}

#[test]
fn loss_csv_format() {
    let rec = LossRecord { step: 1, d_loss: 1.5, g_loss: 0.25, d_global: 1.0, d_local: 0.5 };
    let text = String::from_utf8(csv(&[rec])).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(LOSS_CSV_HEADER));
    assert_eq!(LOSS_CSV_HEADER, "step,d_loss,g_loss,d_global,d_local");
    assert!(lines.next().unwrap().starts_with("1,"));
}

#[test]
fn resume_matches_uninterrupted() {
    let (train, _) = data();
    let mut straight = Trainer::new(small_config(), small_run(20)).unwrap();
    let full = straight.train(&train).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(small_config(), small_run(20)).unwrap();
    let mut log = Vec::new();
    first.train_until(&train, 10, &mut log).unwrap();
    save_checkpoint(dir.path(), &first.to_checkpoint()).unwrap();
    drop(first);

    let mut resumed = Trainer::from_checkpoint(load_checkpoint(dir.path(), Some(&small_config())).unwrap()).unwrap();
    resumed.train_until(&train, 20, &mut log).unwrap();
    assert_eq!(csv(&log), csv(&full));
    assert!(resumed.to_checkpoint().bitwise_eq(&straight.to_checkpoint()));
}

#[test]
fn checkpoint_round_trip_bitwise() {
    let (train, _) = data();
    let mut t = Trainer::new(small_config(), small_run(3)).unwrap();
    t.train(&train).unwrap();
    let ck = t.to_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &ck).unwrap();
    let back = load_checkpoint(dir.path(), None).unwrap();
    assert!(back.bitwise_eq(&ck));
    assert_eq!(encode(&back), encode(&ck));
    assert_eq!(back.rng.restore(), t.rng);
}

fn encoded() -> (Vec<u8>, Vec<u8>) {
    let t = Trainer::new(small_config(), small_run(1)).unwrap();
    encode(&t.to_checkpoint())
}

#[test]
fn corrupted_magic_rejected() {
    let (json, mut blob) = encoded();
    blob[0] ^= 0xFF;
    assert!(matches!(decode(&json, &blob, None), Err(CheckpointError::BadMagic)));
}

#[test]
fn truncated_tensor_file_rejected() {
    let (json, blob) = encoded();
    for cut in [blob.len() - 1, blob.len() / 2, 12, 3] {
        let r = decode(&json, &blob[..cut], None);
        assert!(matches!(r, Err(CheckpointError::Truncated { .. })), "cut {cut}: {r:?}");
    }
}

#[test]
fn config_mismatch_rejected() {
    let (json, blob) = encoded();
    let other = ModelConfig { base_width: 8, ..small_config() };
    assert!(matches!(decode(&json, &blob, Some(&other)), Err(CheckpointError::ConfigMismatch(_))));
    assert!(decode(&json, &blob, Some(&small_config())).is_ok());
}

#[test]
fn missing_checkpoint_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_checkpoint(&dir.path().join("nope"), None), Err(CheckpointError::Io { .. })));
}

#[test]
fn run_config_validation() {
    assert!(Trainer::new(small_config(), RunConfig { batch_size: 1, ..small_run(1) }).is_err());
    assert!(Trainer::new(small_config(), RunConfig { d_steps_per_g: 0, ..small_run(1) }).is_err());
}

#[test]
fn training_set_checked() {
    let (train, _) = data();
    let mut t = Trainer::new(small_config(), small_run(1)).unwrap();
    assert!(t.train(&[]).is_err());
    let mut bad = train[..2].to_vec();
    bad[0].label = 5;
    assert!(t.train(&bad).is_err());
}

/// D-capacity oracle: the discriminator alone learns to tell held-out real
/// frames from a frozen generator's output.
#[test]
fn discriminator_capacity() {
    let spec = BenchmarkSpec::default();
    let (train, test) = data();
    let mut t = Trainer::new(spec.model_config(Variant::Proposed), spec.run_config()).unwrap();
    for _ in 0..200 {
        t.discriminator_step(&train).unwrap();
    }
    let acc = t.discriminator_accuracy(&test, 1).unwrap();
    assert!(acc > 0.9, "held-out real-vs-fake accuracy {acc}");
}
