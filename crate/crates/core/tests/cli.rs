use std::path::PathBuf;
use std::process::{Command, Output};

use walsh_lab::report::{parse_csv, RunManifest};
use walsh_lab::{ArithmeticSequence, SequenceKind};

fn wsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsl"))
        .args(args)
        .env_remove("WSL_MAX_MEM_GIB")
        .output()
        .expect("binary runs")
}

fn manifest(out: &Output) -> RunManifest {
    RunManifest::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wsl-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn lemma3_over_all_masks() {
    let out = wsl(&[
        "lemma-check",
        "--lemma",
        "3",
        "--lambda",
        "12",
        "--masks",
        "all",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(&out);
    assert_eq!(m.reports.len(), 4096);
    assert!(m.all_pass());
    assert_eq!(m.command, "lemma-check");
    let masks: Vec<u64> = m
        .reports
        .iter()
        .map(|r| r.params["mask"].as_u64().unwrap())
        .collect();
    assert_eq!(masks, (0..4096).collect::<Vec<_>>());
}

#[test]
fn oversized_lambda_is_a_resource_error() {
    let out = wsl(&["lemma-check", "--lemma", "3", "--lambda", "99"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("bytes") && err.contains(&(16u128 << 99).to_string()),
        "{err}"
    );

    let out = wsl(&["sieve", "--lambda", "99"]);
    assert_eq!(out.status.code(), Some(3));

    let out = Command::new(env!("CARGO_BIN_EXE_wsl"))
        .args(["theorem-scan", "--lambda", "20"])
        .env("WSL_MAX_MEM_GIB", "0.001")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_errors() {
    assert_eq!(
        wsl(&["lemma-check", "--no-such-flag"]).status.code(),
        Some(2)
    );
    assert_eq!(wsl(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(wsl(&[]).status.code(), Some(2));
    assert_eq!(
        wsl(&["lemma-check", "--lemma", "9", "--lambda", "8"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        wsl(&["bilinear", "--mask", "0", "--mu", "5", "--nu", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(wsl(&["--help"]).status.code(), Some(0));
}

#[test]
fn theorem_scan_csv() {
    let out = wsl(&[
        "theorem-scan",
        "--lambda-min",
        "8",
        "--lambda-max",
        "16",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("lemma_id,lambda,params_json,lhs,rhs,ratio,fitted_constant,pass\n"));
    let reports = parse_csv(&text).unwrap();
    assert_eq!(reports.len(), 9);
    let lambdas: Vec<u32> = reports.iter().map(|r| r.lambda).collect();
    assert_eq!(lambdas, (8..=16).collect::<Vec<_>>());
}

#[test]
fn small_theorem_instance_fails_honestly() {
    let out = wsl(&["theorem-scan", "--lambda", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m.reports[0].lhs, 3.0);
    assert!(!m.reports[0].pass);
}

#[test]
fn out_path_picks_format_by_extension() {
    let csv = scratch("carry.csv");
    let out = wsl(&[
        "carry-rate",
        "--mask",
        "0",
        "--mu",
        "4",
        "--nu",
        "8",
        "--rho",
        "2",
        "--k",
        "4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let reports = parse_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(reports[0].lhs, 4470.0 / 24576.0);

    let json = scratch("type1.json");
    let out = wsl(&[
        "type1",
        "--mask",
        "{3}",
        "--mu",
        "1",
        "--nu",
        "2",
        "--out",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let m = RunManifest::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(m.reports[0].lhs, 4.0);
}

#[test]
fn sieve_writes_a_dump() {
    let path = scratch("lv.bin");
    let out = wsl(&[
        "sieve",
        "--lambda",
        "12",
        "--kind",
        "liouville",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(&out);
    assert_eq!(m.payload.as_ref().unwrap()["entries"], 4096);
    let seq = ArithmeticSequence::read_dump(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(seq.kind(), SequenceKind::Liouville);
    assert_eq!(seq.get(12), -1.0);
}

#[test]
fn scan_from_config_file() {
    let cfg = scratch("scan.json");
    std::fs::write(
        &cfg,
        r#"{"lambda_range": [6, 7], "mask_family": {"family": "structured"}, "lemmas": ["L3", "L6"], "seed": 3}"#,
    )
    .unwrap();
    let out = wsl(&["scan", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(&out);
    assert_eq!(m.summary.as_ref().unwrap().failures, 0);
    assert!(m
        .reports
        .iter()
        .all(|r| r.lemma_id.as_str() == "L3" || r.lemma_id.as_str() == "L6"));
    assert_eq!(m.config["seed"], 3);
}

#[test]
fn same_seed_same_bytes() {
    let args = [
        "lemma-check",
        "--lemma",
        "6",
        "--lambda",
        "9",
        "--masks",
        "random:25",
        "--seed",
        "12",
    ];
    let a = wsl(&args);
    let b = wsl(&args);
    assert_eq!(a.stdout, b.stdout);
    let c = wsl(&[
        "lemma-check",
        "--lemma",
        "6",
        "--lambda",
        "9",
        "--masks",
        "random:25",
        "--seed",
        "13",
    ]);
    assert_ne!(a.stdout, c.stdout);

    let stamped = wsl(&[
        "type1",
        "--mask",
        "5",
        "--mu",
        "2",
        "--nu",
        "3",
        "--timestamps",
    ]);
    let m = manifest(&stamped);
    assert!(m.started.is_some() && m.finished.is_some());
}
