use std::fs;
use std::path::Path;
use std::process::Command;

const TINY: &str = r#"
seed = 5
block_len = 16
window = 4

[corpus]
train = 40
dev = 2
test_clean = 4
test_other = 4
max_len = 8

[model]
model_dim = 16
num_layers = 1
num_heads = 2
ffn_dim = 16

[denoiser]
steps = 20
batch_size = 4
warmup_steps = 5

[ar]
steps = 20
batch_size = 4
warmup_steps = 5

[refiner]
steps = 20
batch_size = 4
warmup_steps = 5

[decode]
block_len = 16
steps = 4

[deliberation]
strategy = "low_confidence"
mask_ratio = 0.5
max_len = 16

[sweep]
splits = ["test_other"]
steps = [1, 4]
decode_sub_blocks = [1, 2]
semi_ar_steps = [4]
mask_ratios = [0.5, 1.0]
mask_strategies = ["random", "low_confidence"]
deliberation_sub_blocks = [2]
text_refiner = true
timed = false
"#;

fn mdasr(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mdasr")).args(args).output().unwrap();
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Runs every subcommand in pipeline order inside `dir`.
fn pipeline(dir: &Path) {
    let config = dir.join("exp.toml");
    fs::write(&config, TINY).unwrap();
    let c = config.to_str().unwrap();
    let d = dir.to_str().unwrap();
    let data = dir.join("data");
    let steps: [Vec<&str>; 8] = [
        vec!["gen-data", "--config", c, "--out", data.to_str().unwrap()],
        vec!["train-denoiser", "--config", c, "--out", d],
        vec!["train-denoiser", "--config", c, "--out", d, "--text-only"],
        vec!["train-ar", "--config", c, "--out", d, "--seed", "6"],
        vec!["decode", "--config", c, "--out", d],
        vec!["decode", "--config", c, "--out", d, "--system", "ar"],
        vec!["deliberate", "--config", c, "--out", d],
        vec!["sweep", "--config", c, "--out", d],
    ];
    for args in steps {
        let (ok, _, err) = mdasr(&args);
        assert!(ok, "{args:?} failed: {err}");
    }
    let (ok, stdout, err) = mdasr(&["eval", "--config", c, "--out", d]);
    assert!(ok, "eval failed: {err}");
    assert!(stdout.contains("\"wer\""), "{stdout}");
}

/// File contents with timing fields blanked.
fn untimed(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => text
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("elapsed_s");
                v.to_string()
            })
            .collect::<Vec<_>>()
            .join("\n"),
        Some("csv") if text.starts_with("system,") => text
            .lines()
            .map(|l| {
                let mut cols: Vec<&str> = l.split(',').collect();
                cols.remove(9);
                cols.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n"),
        _ => text,
    }
}

#[test]
fn pipeline_runs_and_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let outputs = [
        "denoiser_log.csv",
        "ar_log.csv",
        "refiner_log.csv",
        "hypotheses.jsonl",
        "ar.jsonl",
        "deliberated.jsonl",
        "eval.csv",
        "bench.csv",
        "plot.csv",
    ];
    for name in outputs {
        assert_eq!(untimed(&a.path().join(name)), untimed(&b.path().join(name)), "{name} differs");
    }
    for ckpt in ["denoiser.ckpt", "ar.ckpt", "refiner.ckpt"] {
        assert_eq!(fs::read(a.path().join(ckpt)).unwrap(), fs::read(b.path().join(ckpt)).unwrap(), "{ckpt} differs");
    }
    let bench = fs::read_to_string(a.path().join("bench.csv")).unwrap();
    assert!(bench.lines().count() > 8, "{bench}");
}

#[test]
fn seed_flag_changes_training() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, TINY).unwrap();
    let c = config.to_str().unwrap();
    let data = dir.path().join("data");
    assert!(mdasr(&["gen-data", "--config", c, "--out", data.to_str().unwrap()]).0);
    let (x, y) = (dir.path().join("x"), dir.path().join("y"));
    assert!(mdasr(&["train-ar", "--config", c, "--out", x.to_str().unwrap(), "--seed", "1"]).0);
    assert!(mdasr(&["train-ar", "--config", c, "--out", y.to_str().unwrap(), "--seed", "2"]).0);
    assert_ne!(fs::read(x.join("ar.ckpt")).unwrap(), fs::read(y.join("ar.ckpt")).unwrap());
}

fn assert_one_line_error(args: &[&str]) {
    let (ok, _, err) = mdasr(args);
    assert!(!ok, "{args:?} succeeded");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
}

#[test]
fn failures_are_single_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_one_line_error(&["decode", "--config", "/nonexistent/exp.toml", "--out", d]);
    assert_one_line_error(&["frobnicate"]);
    assert_one_line_error(&["decode"]);
    let config = dir.path().join("exp.toml");
    fs::write(&config, TINY).unwrap();
    let c = config.to_str().unwrap();
    assert_one_line_error(&["train-ar", "--config", c, "--out", d]);
    let data = dir.path().join("data");
    assert!(mdasr(&["gen-data", "--config", c, "--out", data.to_str().unwrap()]).0);
    assert_one_line_error(&["decode", "--config", c, "--out", d]);
    assert_one_line_error(&["deliberate", "--config", c, "--out", d]);
    fs::write(&config, "block_len = 16\n").unwrap();
    assert_one_line_error(&["eval", "--config", c, "--out", d]);
}

#[test]
fn shipped_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let cfg = mdasr::harness::ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.decode.block_len, cfg.block_len);
    assert!(cfg.paths.data.ends_with("runs/toy/data"));
    assert_eq!(cfg.denoiser.steps, cfg.ar.steps);
}
