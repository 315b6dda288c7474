use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coopforge::domains::{save_ppm, DomainPair};
use coopforge::tensor::ctns;
use coopforge::trainer::{load_checkpoint, save_checkpoint, EvalRow, RunConfig, TrainState};
use coopforge::Tensor;

const RING: &str = "# small ring pair\n\
    x.kind=ring\nx.n=200\nx.modes=8\nx.radius=1\nx.mode_std=0.05\nx.seed=1\n\
    y.kind=ring\ny.n=200\ny.modes=8\ny.radius=1\ny.mode_std=0.05\ny.scale=2\ny.seed=2\n\
    eval_n=64\n";

const DOTS: &str = "x.kind=moving_dot\nx.n=4\nx.len=6\nx.side=12\nx.appearance=box\nx.seed=1\n\
    y.kind=moving_dot\ny.n=4\ny.len=6\ny.side=12\ny.appearance=blob\ny.seed=2\n\
    eval_n=4\nbatch=2\n";

fn coopforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopforge")).args(args).env_remove("COOPFORGE_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = coopforge(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_config_names_the_path() {
    let out = coopforge(&["train", "/definitely/not/here.txt"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/definitely/not/here.txt"), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn single_iteration_writes_one_of_each() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ring.txt", RING);
    let run = dir.path().join("run");
    ok(&["train", p(&cfg), "--iterations", "1", "--eval-every", "1", "--out", p(&run)]);
    let mut names: Vec<String> = fs::read_dir(&run).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["ckpt_1", "grid_1.ppm", "metrics.csv"]);
    assert_eq!(fs::read_to_string(run.join("metrics.csv")).unwrap().lines().count(), 2);
}

#[test]
fn repeated_training_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ring.txt", &format!("{RING}iterations=30\neval_every=10\n"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["train", p(&cfg), "--out", p(&a)]);
    let threaded = Command::new(env!("CARGO_BIN_EXE_coopforge"))
        .args(["train", p(&cfg), "--out", p(&b), "--threads", "2"])
        .env("COOPFORGE_THREADS", "2")
        .output()
        .unwrap();
    assert!(threaded.status.success());
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
}

#[test]
fn bad_thread_cap_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ring.txt", RING);
    let out = Command::new(env!("CARGO_BIN_EXE_coopforge"))
        .args(["train", p(&cfg), "--out", p(&dir.path().join("run"))])
        .env("COOPFORGE_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("COOPFORGE_THREADS"));
}

#[test]
fn unknown_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ring.txt", RING);
    let out = coopforge(&["train", p(&cfg), "--learning-rate", "1", "--out", p(&dir.path().join("run"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

/// Trains a short ring run and returns its final checkpoint directory.
fn ring_checkpoint(dir: &Path) -> std::path::PathBuf {
    let cfg = write_config(dir, "ring.txt", &format!("{RING}iterations=20\neval_every=10\n"));
    let run = dir.join("run");
    ok(&["train", p(&cfg), "--out", p(&run)]);
    run.join("ckpt_20")
}

#[test]
fn translate_without_langevin_is_the_translator() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = ring_checkpoint(dir.path());
    let input = Tensor::<f32>::from_f64(&[5, 2], &[0.5, 0.1, -1.0, 0.3, 0.0, 0.9, 0.7, -0.7, 1.2, 0.0]).unwrap();
    let src = dir.path().join("points.ctns");
    ctns::save(&input, &src).unwrap();

    let direct = dir.path().join("direct.ctns");
    ok(&["translate", p(&ckpt), p(&src), "--direction", "x2y", "--langevin-steps", "0", "--out", p(&direct)]);
    let got: Tensor<f32> = ctns::load(&direct).unwrap();
    let state = load_checkpoint(&ckpt).unwrap().state;
    assert!(got.bits_eq(&state.gen_y.translate(&input).unwrap()));

    let revised = dir.path().join("revised.ctns");
    ok(&["translate", p(&ckpt), p(&src), "--direction", "x2y", "--out", p(&revised)]);
    let rev: Tensor<f32> = ctns::load(&revised).unwrap();
    assert_eq!(rev.shape(), got.shape());
    assert!(!rev.bits_eq(&got));

    let back = dir.path().join("back.ctns");
    ok(&["translate", p(&ckpt), p(&src), "--direction", "y2x", "--langevin-steps", "0", "--out", p(&back)]);
    assert!(ctns::load::<f32>(&back).unwrap().bits_eq(&state.gen_x.translate(&input).unwrap()));
}

#[test]
fn translate_rejects_incompatible_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = ring_checkpoint(dir.path());
    let src = dir.path().join("wrong.ctns");
    ctns::save(&Tensor::<f32>::zeros(&[4, 3]), &src).unwrap();
    let out = coopforge(&["translate", p(&ckpt), p(&src), "--out", p(&dir.path().join("o.ctns"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("shape"));
}

#[test]
fn sequence_directory_translates_frame_for_frame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dots.txt", &format!("{DOTS}iterations=2\neval_every=1\n"));
    let run = dir.path().join("run");
    ok(&["train", p(&cfg), "--out", p(&run)]);

    let pair = DomainPair::parse(DOTS.lines().filter(|l| !l.starts_with("batch")).collect::<Vec<_>>().join("\n").as_str()).unwrap();
    let (x, _) = pair.generate().unwrap();
    let frames = x.frames().unwrap();
    let seq = dir.path().join("seq");
    fs::create_dir(&seq).unwrap();
    for i in 0..6 {
        save_ppm(&frames.slice_batch(i).reshape(&[1, 12, 12]).unwrap(), seq.join(format!("frame_{i:02}.pgm"))).unwrap();
    }
    let out = dir.path().join("out");
    ok(&["translate", p(&run.join("ckpt_2")), p(&seq), "--out", p(&out)]);
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, (0..6).map(|i| format!("frame_{i:02}.pgm")).collect::<Vec<_>>());
}

#[test]
fn eval_reproduces_the_last_training_row() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = ring_checkpoint(dir.path());
    let csv = dir.path().join("eval.csv");
    let out = ok(&["eval", p(&ckpt), "--out", p(&csv)]);
    let printed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(printed, fs::read_to_string(&csv).unwrap());

    let row = printed.lines().nth(1).unwrap();
    let head: Vec<&str> = row.split(',').take(8).collect();
    let got = EvalRow::parse_csv(&head.join(",")).unwrap();
    let log = fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    let last = EvalRow::parse_csv(log.lines().last().unwrap()).unwrap();
    for (a, b) in got.iter().zip(&last) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{got:?} vs {last:?}");
    }
    // Ring descriptors carry mode coverage; no pairing means no PSNR.
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols.len(), 14);
    assert!(!cols[10].is_empty() && cols[12].is_empty());
}

#[test]
fn identity_checkpoint_has_no_cycle_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(RING, &[]).unwrap();
    let ckpt = dir.path().join("ckpt_0");
    save_checkpoint(&ckpt, &TrainState::new(cfg.spec.clone(), 0).unwrap(), &[]).unwrap();
    let desc = write_config(dir.path(), "desc.txt", RING);
    let out = ok(&["eval", p(&ckpt), "--descriptor", p(&desc)]);
    let row = String::from_utf8(out.stdout).unwrap().lines().nth(1).unwrap().to_string();
    let cycle: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!(cycle.abs() < 1e-12, "{row}");
}

#[test]
fn malformed_descriptor_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = ring_checkpoint(dir.path());
    let desc = write_config(dir.path(), "bad.txt", "x.kind=ring\nx.n=ten\n");
    let out = coopforge(&["eval", p(&ckpt), "--descriptor", p(&desc)]);
    assert!(!out.status.success());
    let out = coopforge(&["gen", p(&desc), "--out", p(&dir.path().join("g"))]);
    assert!(!out.status.success());
}

#[test]
fn gen_and_sample_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let desc = write_config(dir.path(), "ring.txt", RING);
    let data = dir.path().join("data");
    ok(&["gen", p(&desc), "--out", p(&data), "--x.n", "50"]);
    assert_eq!(ctns::load::<f32>(data.join("x.ctns")).unwrap().shape(), &[50, 2]);
    assert_eq!(ctns::load::<f32>(data.join("y.ctns")).unwrap().shape(), &[200, 2]);
    assert!(data.join("x.txt").exists());

    let ckpt = ring_checkpoint(dir.path());
    let samples = dir.path().join("samples");
    ok(&["sample", p(&ckpt), "--out", p(&samples), "--n", "16"]);
    assert!(samples.join("grid.ppm").exists());
    assert_eq!(ctns::load::<f32>(samples.join("x.ctns")).unwrap().shape(), &[16, 2]);
}
