use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
# tiny model so each run takes well under a second
model.image_size = 32
model.levels = 3
model.base_width = 4
model.noise_dim = 8
model.embedding_dim = 8
train.steps = 6
train.batch_size = 4
data.n_per_class = 12
";

fn udfe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udfe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, extra: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(dir: &Path, cfg: &str, out: &str) -> Output {
    udfe(&["train", "--config", cfg, "--out", s(&dir.join(out))])
}

fn trained(dir: &TempDir) -> std::path::PathBuf {
    let cfg = write_config(dir.path(), "run.cfg", "");
    let o = train(dir.path(), &cfg, "run");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.path().join("run/checkpoint")
}

#[test]
fn train_writes_losses_and_checkpoint() {
    let dir = TempDir::new().unwrap();
    let ck = trained(&dir);
    let csv = fs::read_to_string(dir.path().join("run/losses.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,d_loss,g_loss,d_global,d_local");
    assert_eq!(lines.len(), 7);
    for line in &lines[1..] {
        let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 5);
        assert!(vals.iter().all(|v| v.is_finite()));
    }
    assert!(ck.join("manifest.json").is_file() && ck.join("tensors.bin").is_file());
}

#[test]
fn training_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "");
    let run = |out: &str, seed: &str| {
        let o = udfe(&["train", "--config", &cfg, "--seed", seed, "--out", s(&dir.path().join(out))]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(dir.path().join(out).join("losses.csv")).unwrap()
    };
    assert_eq!(run("a", "3"), run("b", "3"));
    assert_ne!(run("a", "3"), run("c", "4"));
    assert_eq!(
        fs::read(dir.path().join("a/checkpoint/tensors.bin")).unwrap(),
        fs::read(dir.path().join("b/checkpoint/tensors.bin")).unwrap()
    );
}

#[test]
fn invalid_image_size_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "model.image_size = 100\n").unwrap();
    let o = train(dir.path(), s(&cfg), "x");
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("image_size"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "model.depth = 4\n");
    let o = train(dir.path(), &cfg, "x");
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("model.depth"));
}

#[test]
fn unused_keys_warn() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "ablate.sample_seed = 5\n");
    let o = train(dir.path(), &cfg, "x");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("ablate.sample_seed"), "{}", stderr(&o));
}

#[test]
fn generate_writes_deterministic_frames() {
    let dir = TempDir::new().unwrap();
    let ck = trained(&dir);
    let gen = |out: &str| {
        let out = dir.path().join(out);
        let o = udfe(&["generate", "--checkpoint", s(&ck), "--n", "5", "--label", "1", "--seed", "8", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let mut names: Vec<String> =
            fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        let bytes: Vec<Vec<u8>> = names.iter().map(|n| fs::read(out.join(n)).unwrap()).collect();
        (names, bytes)
    };
    let (names, a) = gen("g1");
    assert_eq!(names, (0..5).map(|i| format!("gen_1_{i:04}.pgm")).collect::<Vec<_>>());
    assert!(a.iter().all(|b| b.starts_with(b"P5\n32 32\n255\n") && b.len() == 13 + 32 * 32));
    assert_eq!(gen("g2").1, a);
}

#[test]
fn generate_rejects_bad_label_and_checkpoint() {
    let dir = TempDir::new().unwrap();
    let ck = trained(&dir);
    let out = dir.path().join("g");
    let o = udfe(&["generate", "--checkpoint", s(&ck), "--n", "2", "--label", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = udfe(&["generate", "--checkpoint", s(&dir.path().join("none")), "--n", "2", "--label", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));

    let broken = dir.path().join("broken");
    fs::create_dir(&broken).unwrap();
    fs::copy(ck.join("manifest.json"), broken.join("manifest.json")).unwrap();
    fs::write(broken.join("tensors.bin"), b"NOTACKPT").unwrap();
    let o = udfe(&["generate", "--checkpoint", s(&broken), "--n", "2", "--label", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let cfg = write_config(dir, "synth.cfg", "data.n_train = 16\ndata.n_test = 8\n");
    let out = dir.join("ds");
    let o = udfe(&["synth", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn read_metrics(path: &Path) -> Vec<(String, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("metric,value"));
    lines
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn synth_writes_manifest_and_frames() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path());
    let manifest = fs::read_to_string(ds.join("manifest.json")).unwrap();
    assert_eq!(manifest.matches("\"train\"").count(), 16);
    assert_eq!(manifest.matches("\"test\"").count(), 8);
    assert!(ds.join("train_0015.pgm").is_file() && ds.join("test_0007.pgm").is_file());
}

#[test]
fn evaluate_against_itself() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path());
    let out = dir.path().join("ev");
    let o = udfe(&["evaluate", "--real", s(&ds), "--fake", s(&ds), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_metrics(&out.join("metrics.csv"));
    let names: Vec<&str> = m.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(names, ["ssim_mean", "ms_ssim_mean", "fid"]);
    assert!((m[0].1 - 1.0).abs() < 1e-9 && (m[1].1 - 1.0).abs() < 1e-9);
    assert!(m[2].1.abs() < 1e-6);
}

#[test]
fn evaluate_from_checkpoint() {
    let dir = TempDir::new().unwrap();
    let ck = trained(&dir);
    let ds = synth(dir.path());
    let out = dir.path().join("ev");
    let o = udfe(&["evaluate", "--real", s(&ds), "--checkpoint", s(&ck), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_metrics(&out.join("metrics.csv"));
    assert!(m[0].1 < 1.0 && m[2].1 > 0.0, "{m:?}");
}

#[test]
fn evaluate_missing_dataset() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path());
    let out = dir.path().join("ev");
    let o = udfe(&["evaluate", "--real", s(&dir.path().join("nope")), "--fake", s(&ds), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = udfe(&["evaluate", "--real", s(&ds), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn classify_with_and_without_synthetic_frames() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path());
    let ck = trained(&dir);
    let gen = dir.path().join("gen");
    for label in ["0", "1"] {
        let o = udfe(&["generate", "--checkpoint", s(&ck), "--n", "4", "--label", label, "--out", s(&gen)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let rows = |out: &Path| -> Vec<String> {
        let text = fs::read_to_string(out.join("classify.csv")).unwrap();
        let mut lines = text.lines().map(str::to_string);
        assert_eq!(lines.next().unwrap(), "config,accuracy,precision,recall,f1");
        lines.collect()
    };
    let cfg = write_config(dir.path(), "cls.cfg", "downstream.n_trees = 10\n");
    let out = dir.path().join("c1");
    let o = udfe(&["classify", "--config", &cfg, "--train", s(&ds), "--test", s(&ds), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&out);
    assert_eq!(r.len(), 1);
    assert!(r[0].starts_with("real_only,"));

    let out = dir.path().join("c2");
    let o = udfe(&["classify", "--config", &cfg, "--train", s(&ds), "--test", s(&ds), "--synth", s(&gen), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&out);
    let names: Vec<&str> = r.iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["real_only", "real_plus_synth", "delta"]);
    let acc = |i: usize| r[i].split(',').nth(1).unwrap().parse::<f64>().unwrap();
    // three values each rounded to 4 decimals
    assert!((acc(1) - acc(0) - acc(2)).abs() <= 1.5e-4 + 1e-12);
}

#[test]
fn ablate_reports_variants_in_order() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "abl.cfg",
        "data.n_train = 12\ndata.n_test = 12\nablate.synth_per_class = 4\ndownstream.n_trees = 5\ndownstream.pca_k = 4\n",
    );
    let out = dir.path().join("abl");
    let o = udfe(&["ablate", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# seed=7 steps=6"), "{}", lines[0]);
    assert_eq!(lines[1], "config,accuracy,precision,recall,f1");
    let names: Vec<&str> = lines[2..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["original", "wo_dfe", "wo_cbatch", "proposed"]);
    for n in names {
        let losses = fs::read_to_string(out.join(format!("losses_{n}.csv"))).unwrap();
        assert_eq!(losses.lines().count(), 7);
    }
}

#[test]
fn unwritable_output_is_exit_1() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"").unwrap();
    let o = udfe(&["synth", "--out", s(&blocker.join("sub"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
