use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .unwrap()
}

/// A config file in `dir` pointing at the shipped fixtures.
fn write_config(dir: &Path) -> PathBuf {
    let f = fixtures();
    let text = format!(
        "data_dir = \"data\"\npublic_base_url = \"https://visbias.example.org\"\n\
         [fixtures]\nstories_dir = {:?}\nplatform = {:?}\n",
        f.join("stories"),
        f.join("pilot/platform.json"),
    );
    let path = dir.join("visbias.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn visbias(config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_visbias"));
    cmd.env_remove("VISBIAS_CONFIG");
    if let Some(c) = config {
        cmd.env("VISBIAS_CONFIG", c);
    }
    cmd.args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn cluster_of_missing_story_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = visbias(
        None,
        &[
            "--data-dir",
            dir.path().to_str().unwrap(),
            "cluster",
            "missing-story",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown story"), "{stderr}");
    assert_eq!(stderr.trim().lines().count(), 1);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(visbias(None, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        visbias(None, &["cluster", "s", "--k", "2", "--auto-k"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        visbias(None, &["compose", "s", "--layout", "2x2"]).status.code(),
        Some(2)
    );
}

#[test]
fn replay_of_pilot_log() {
    let log = fixtures().join("pilot/events.jsonl");
    let stats = json_of(&visbias(None, &["replay", log.to_str().unwrap(), "--json"]));
    assert_eq!(stats["targeted_count"], 30);
    assert_eq!(stats["responses_count"], 53);
    assert!(stats["median_responses_per_responder"].as_f64().unwrap() >= 2.0);
}

#[test]
fn replay_rejects_a_corrupt_log() {
    let dir = tempfile::tempdir().unwrap();
    let good = std::fs::read_to_string(fixtures().join("pilot/events.jsonl")).unwrap();
    let lines: Vec<&str> = good.lines().collect();
    // Swapping two events breaks the strictly increasing id order.
    let swapped = format!("{}\n{}\n{}\n", lines[1], lines[0], lines[2..].join("\n"));
    let path = dir.path().join("events.jsonl");
    std::fs::write(&path, swapped).unwrap();
    assert_eq!(
        visbias(None, &["replay", path.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn pipeline_and_campaign_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = Some(cfg.as_path());
    let query = fixtures().join("queries/energy-reform.json");
    let query = query.to_str().unwrap();

    let report = json_of(&visbias(cfg, &["--json", "ingest", query]));
    assert_eq!(report["image_count"], 16);
    assert_eq!(visbias(cfg, &["ingest", query]).status.code(), Some(1));
    assert!(dir
        .path()
        .join("data/artifacts/energy-reform/clusters.json")
        .is_file());

    let clusters = json_of(&visbias(cfg, &["--json", "cluster", "energy-reform", "--k", "2"]));
    assert_eq!(clusters["clusters"].as_array().unwrap().len(), 2);

    let compose = [
        "--json",
        "compose",
        "energy-reform",
        "--images",
        "dn-01-i00,vi-02-i00,nv-01-i00,rc-01-i00",
        "--layout",
        "2x2",
        "--caption",
        "Misma protesta, distintas fotos",
    ];
    let first = json_of(&visbias(cfg, &compose));
    let second = json_of(&visbias(cfg, &compose));
    assert_eq!(first["png_digest"], second["png_digest"]);
    assert_eq!(first["macro_id"], second["macro_id"]);
    let macro_id = first["macro_id"].as_str().unwrap();

    let c = json_of(&visbias(
        cfg,
        &[
            "--json",
            "campaign",
            "create",
            "--story",
            "energy-reform",
            "--macro",
            macro_id,
            "--terms",
            "#Gasolinazo",
            "--id",
            "pilot",
        ],
    ));
    assert_eq!(c["status"], "draft");
    assert_eq!(
        visbias(cfg, &["campaign", "run-ticks", "pilot"]).status.code(),
        Some(1)
    );
    assert!(visbias(cfg, &["campaign", "start", "pilot"]).status.success());

    // Two invocations continue the same scripted session.
    let start = "2017-01-10T15:00:00Z";
    let later = "2017-01-10T19:00:00Z";
    assert!(visbias(
        cfg,
        &["campaign", "run-ticks", "pilot", "--ticks", "4", "--start", start]
    )
    .status
    .success());
    assert!(visbias(
        cfg,
        &["campaign", "run-ticks", "pilot", "--ticks", "3", "--start", later]
    )
    .status
    .success());
    let stats = json_of(&visbias(cfg, &["--json", "campaign", "stats", "pilot"]));
    assert_eq!(stats["targeted_count"], 30);
    assert_eq!(stats["responses_count"], 53);

    let queue = json_of(&visbias(cfg, &["--json", "campaign", "queue", "pilot"]));
    assert_eq!(queue.as_array().unwrap().len(), 22);

    let log = dir.path().join("data/campaigns/pilot/events.jsonl");
    let replayed = json_of(&visbias(None, &["--json", "replay", log.to_str().unwrap()]));
    assert_eq!(replayed, stats);

    assert!(visbias(cfg, &["campaign", "finish", "pilot"]).status.success());
    assert_eq!(
        visbias(cfg, &["campaign", "start", "pilot"]).status.code(),
        Some(1)
    );
}
