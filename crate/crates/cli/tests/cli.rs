//! End-to-end behaviour of the `gencs` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
    "data": {"d": 8, "intrinsic_dim": 2},
    "ms": [4],
    "latent_dim": 3,
    "latent_dim_im": 2,
    "generator": {"hidden": [8], "activation": "tanh"},
    "discriminator": {"hidden": [8], "activation": "tanh"},
    "n_train": 16,
    "n_test": 2,
    "trials": 3,
    "n_validation": 2,
    "gan": {"batch": 4, "steps": 5},
    "dcs": {"batch": 4, "steps": 5},
    "recovery": {
        "sparsegen": {"iterations": 6, "sparsegen_phase": 3},
        "pgdgan": {"inner_steps": 3},
        "spgdgan": {"inner_steps": 3}
    },
    "presence": {"m": 4, "n_z": 20, "n_test": 4},
    "rip": {"trials": 5},
    "contraction": {"seeds": 3, "max_iterations": 20, "epsilons": [0.1, 0.01, 0.001]},
    "bench": {"d": 8, "m": 4, "s": 2, "repeats": 1}
}"#;

fn gencs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gencs"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn bound_prints_minimum_measurements() {
    let o = gencs(&["bound"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "20");
    let o = gencs(&["bound", "--gamma", "0.25"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "1435");
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gencs(&["bound", "--tau", "2"])), 1);
    assert_eq!(code(&gencs(&["no-such-command"])), 1);
    assert_eq!(code(&gencs(&["--jobs", "0", "bound"])), 1);
    let missing = dir.path().join("absent.json");
    assert_eq!(code(&gencs(&["--config", missing.to_str().unwrap(), "bound"])), 1);
    let bad = write_config(dir.path(), "{\"trials\": ");
    assert_eq!(code(&gencs(&["--config", &bad, "recover"])), 1);
    let invalid = write_config(dir.path(), "{\"ms\": []}");
    assert_eq!(code(&gencs(&["--config", &invalid, "recover"])), 1);
}

#[test]
fn help_exits_with_zero() {
    let o = gencs(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["gen-data", "train", "recover", "rip", "bound", "presence", "verify-thm1", "bench"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = gencs(&["--config", &cfg, "--out", blocker.to_str().unwrap(), "gen-data"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_contraction_audit_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"contraction": {"m": 6, "seeds": 3, "max_iterations": 10, "alpha": 0.7}}"#,
    );
    let o = gencs(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "verify-thm1"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("thm1.json").exists());
}

#[test]
fn results_are_byte_identical_across_jobs_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = gencs(&["--config", &cfg, "--seed", "5", "--jobs", jobs, "--out", out.to_str().unwrap(), "recover"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("method,im,m,trial,per_pixel_error,ci_halfwidth,iters,wall_ms\n"));
    assert_eq!(text.lines().count(), 1 + 5 * 2 * 3);

    let other = dir.path().join("other");
    gencs(&["--config", &cfg, "--seed", "6", "--out", other.to_str().unwrap(), "recover"]);
    assert_ne!(fs::read(other.join("results.csv")).unwrap(), outputs[0]);
}

#[test]
fn every_subcommand_runs_on_a_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().to_str().unwrap();
    for (sub, artifact) in [
        ("gen-data", Some("dataset.json")),
        ("train", Some("checkpoints")),
        ("rip", Some("rip.json")),
        ("presence", Some("presence.json")),
        ("bench", None),
    ] {
        let o = gencs(&["--config", &cfg, "--out", out, sub]);
        assert_eq!(code(&o), 0, "{sub}: {}", String::from_utf8_lossy(&o.stderr));
        if let Some(a) = artifact {
            assert!(dir.path().join(a).exists(), "{sub} did not write {a}");
        }
    }
    let ckpts = fs::read_dir(dir.path().join("checkpoints")).unwrap().count();
    assert_eq!(ckpts, 2 * 2);
    let o = gencs(&["--config", &cfg, "--out", out, "verify-thm1"]);
    assert!(matches!(code(&o), 0 | 3));
    assert!(dir.path().join("thm1.json").exists());
}
