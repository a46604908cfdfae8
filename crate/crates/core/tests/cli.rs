use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const TINY: &[&str] = &[
    "--set", "synth.n_users=60",
    "--set", "synth.n_items=120",
    "--set", "synth.n_bundles=40",
    "--set", "synth.bundle_size=5",
    "--set", "stage1.dim=8",
    "--set", "stage1.epochs=5",
    "--set", "stage2.conditions.dim=8",
    "--set", "stage2.conditions.epochs=3",
    "--set", "stage2.denoiser.epochs=5",
    "--set", "stage2.denoiser.time_dim=8",
    "--set", "stage2.steps=50",
    "--set", "stage2.t_prime=5",
    "--set", "stage3.epochs=3",
];

fn coldbundle(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coldbundle"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = coldbundle(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> Option<i32> {
    coldbundle(dir, args).status.code()
}

fn tiny_run(dir: &Path) {
    let mut synth = TINY.to_vec();
    synth.push("synth");
    ok(dir, &synth);
    ok(dir, &["train", "all"]);
}

#[test]
fn stage_two_before_stage_one_is_an_ordering_error() {
    let d = tempfile::tempdir().unwrap();
    let mut synth = TINY.to_vec();
    synth.push("synth");
    ok(d.path(), &synth);
    let out = coldbundle(d.path(), &["train", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage1"));
    assert_eq!(code(d.path(), &["train", "3"]), Some(2));
    assert_eq!(code(d.path(), &["eval"]), Some(2));
}

#[test]
fn contract_errors_exit_2_and_io_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(d.path(), &["--set", "stage1.bogus=3", "synth"]), Some(2));
    assert_eq!(code(d.path(), &["--set", "stage1.lr", "synth"]), Some(2));
    assert_eq!(code(d.path(), &["--scenario", "lukewarm", "synth"]), Some(2));
    assert_eq!(code(d.path(), &["train", "4"]), Some(2));
    assert_eq!(code(d.path(), &["eval", "--no-aug", "--no-moe"]), Some(2));
    assert_eq!(code(d.path(), &["project", "--view", "both"]), Some(2));
    assert_eq!(code(d.path(), &["gates", "load"]), Some(2));
    let missing = d.path().join("nowhere");
    assert_eq!(code(d.path(), &["ingest", "--raw", missing.to_str().unwrap()]), Some(1));
    // No dataset yet: stats needs data/ first.
    assert_eq!(code(d.path(), &["stats"]), Some(2));
}

#[test]
fn full_pipeline_writes_every_artifact_with_a_manifest() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    tiny_run(dir);
    let stats = ok(dir, &["stats", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stats).unwrap();
    assert_eq!(v["n_bundles"], 40);
    let table = ok(dir, &["eval"]);
    assert!(table.contains("cold") && table.contains("variant full"));
    ok(dir, &["eval", "--no-aug"]);
    ok(dir, &["eval", "--no-moe"]);
    ok(dir, &["eval", "--no-diff", "--holdout", "val"]);
    let hits = ok(dir, &["hits"]);
    assert!(hits.starts_with("situation,bint,iint,hits,positives"));
    ok(dir, &["gates"]);
    ok(dir, &["project", "--view", "iint", "--expert", "fused"]);
    for f in [
        "config.json",
        "stats.json",
        "stage1.ckpt",
        "stage2_bint.ckpt",
        "stage2_iint.ckpt",
        "stage3.ckpt",
        "stage3_noaug.ckpt",
        "metrics.json",
        "metrics_no_aug.json",
        "metrics_no_moe.json",
        "metrics_val_no_diff.json",
        "hits.csv",
        "gates.csv",
        "output_gates.csv",
        "projection_iint_fused.csv",
        "data/user_bundle.tsv",
        "split/test.tsv",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let artifacts = manifest["artifacts"].as_object().unwrap();
    assert!(!artifacts.contains_key("manifest.json"));
    for (path, entry) in artifacts {
        let bytes = fs::read(dir.join(path)).unwrap();
        assert_eq!(entry["bytes"], bytes.len() as u64, "{path}");
        assert_eq!(entry["sha256"], hex::encode(Sha256::digest(&bytes)), "{path}");
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        tiny_run(d);
        ok(d, &["eval"]);
    }
    for f in ["stage1.ckpt", "stage2_bint.ckpt", "stage2_iint.ckpt", "stage3.ckpt", "metrics.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn retraining_an_earlier_stage_invalidates_later_ones() {
    let d = tempfile::tempdir().unwrap();
    tiny_run(d.path());
    ok(d.path(), &["eval"]);
    ok(d.path(), &["--set", "stage1.lr=0.02", "train", "1"]);
    let out = coldbundle(d.path(), &["eval"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stale"));
    // The stage-1-only variant still works.
    ok(d.path(), &["eval", "--no-diff"]);
}

#[test]
fn ingest_densifies_string_ids() {
    let d = tempfile::tempdir().unwrap();
    let raw = d.path().join("raw");
    fs::create_dir(&raw).unwrap();
    let mut ub = String::new();
    let mut ui = String::new();
    let mut bi = String::new();
    for u in 0..12 {
        for b in 0..8 {
            if (u + b) % 3 == 0 {
                ub.push_str(&format!("user{u}\tbundle{b}\n"));
            }
        }
        for i in 0..10 {
            if (u * i) % 4 == 1 {
                ui.push_str(&format!("user{u}\titem{i}\n"));
            }
        }
    }
    for b in 0..8 {
        bi.push_str(&format!("bundle{b}\titem{}\nbundle{b}\titem{}\n", b % 10, (b + 3) % 10));
    }
    fs::write(raw.join("user_bundle.tsv"), ub).unwrap();
    fs::write(raw.join("user_item.tsv"), ui).unwrap();
    fs::write(raw.join("bundle_item.tsv"), bi).unwrap();
    let run = d.path().join("run");
    let out = ok(&run, &["ingest", "--raw", raw.to_str().unwrap()]);
    assert!(out.starts_with("12 users, 8 bundles, 10 items"), "{out}");
    assert!(run.join("data/idmap.tsv").is_file());
    ok(&run, &["split"]);
    let table = ok(&run, &["stats"]);
    assert!(table.contains("bint cold"), "{table}");
}

#[test]
fn help_lists_config_keys() {
    let d = tempfile::tempdir().unwrap();
    let help = ok(d.path(), &["--help"]);
    for key in ["stage1.lr", "stage2.denoiser.epochs", "stage3.beta_alpha", "synth.affinity", "ratios.test"] {
        assert!(help.contains(key), "{key}");
    }
}
