//! End-to-end tests of the `kahm` binary: every subcommand is exercised
//! through the real executable, checking byte determinism, exit codes, and
//! the machine-readable error records.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

fn kahm(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kahm"));
    cmd.args(args);
    cmd.env_remove("KAHM_JOBS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| {
        panic!("stderr is not a JSON record ({e}): {text}");
    })
}

/// Generate the small, fast benchmark used by most tests.
fn gen_small(dir: &Path) {
    let out = kahm(
        &[
            "gen-synth",
            "--laws",
            "2",
            "--clusters",
            "2",
            "--lexical-dim",
            "8",
            "--semantic-dim",
            "8",
            "--samples",
            "24",
            "--sigma",
            "0.02",
            "--distortion",
            "0.3",
            "--seed",
            "21",
            "--out",
            dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&out);
}

fn train_small(data: &Path, model: &Path, extra: &[&str]) {
    let mut args = vec![
        "train",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--clusters",
        "2",
        "--seed",
        "5",
    ];
    args.extend_from_slice(extra);
    let out = kahm(&args, &[]);
    assert_ok(&out);
}

/// All files under `dir` (non-recursive) except the run manifest.
fn artifact_names(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .expect("dir exists")
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "run_manifest.json")
        .collect()
}

fn assert_dirs_byte_identical(a: &Path, b: &Path) {
    let names_a = artifact_names(a);
    let names_b = artifact_names(b);
    assert_eq!(names_a, names_b, "artifact sets differ");
    for name in &names_a {
        let bytes_a = std::fs::read(a.join(name)).unwrap();
        let bytes_b = std::fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between runs");
    }
}

#[test]
fn gen_synth_is_byte_deterministic_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d1 = tmp.path().join("one");
    let d2 = tmp.path().join("two");
    gen_small(&d1);
    gen_small(&d2);
    assert_dirs_byte_identical(&d1, &d2);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d1.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "gen-synth");
    assert_eq!(manifest["seed"], 21);
    assert_eq!(manifest["config"]["n_laws"], 2);
    assert_eq!(manifest["format_versions"]["bundle"], 1);
    assert_eq!(manifest["format_versions"]["registry"], 1);
    assert!(manifest["timestamp_utc"].as_str().unwrap().ends_with('Z'));
}

#[test]
fn gen_synth_rejects_negative_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kahm(
        &[
            "gen-synth",
            "--sigma=-0.5",
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 2);
    let record = stderr_record(&out);
    assert_eq!(record["category"], "validation");
    assert_eq!(record["exit_code"], 2);
    assert!(record["error"].as_str().unwrap().contains("sigma"));
}

#[test]
fn train_registry_bytes_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_small(&data);

    let m1 = tmp.path().join("m1");
    let m2 = tmp.path().join("m2");
    let m3 = tmp.path().join("m3");
    train_small(&data, &m1, &["--jobs", "1"]);
    train_small(&data, &m2, &["--jobs", "4"]);
    // KAHM_JOBS is the --jobs default.
    let out = kahm(
        &[
            "train",
            data.to_str().unwrap(),
            "--out",
            m3.to_str().unwrap(),
            "--clusters",
            "2",
            "--seed",
            "5",
        ],
        &[("KAHM_JOBS", "3")],
    );
    assert_ok(&out);

    let r1 = std::fs::read(m1.join("registry.khr")).unwrap();
    let r2 = std::fs::read(m2.join("registry.khr")).unwrap();
    let r3 = std::fs::read(m3.join("registry.khr")).unwrap();
    assert_eq!(r1, r2, "--jobs 1 vs --jobs 4 registries differ");
    assert_eq!(r1, r3, "KAHM_JOBS-driven registry differs");
    let s1 = std::fs::read(m1.join("train_summary.json")).unwrap();
    let s2 = std::fs::read(m2.join("train_summary.json")).unwrap();
    assert_eq!(s1, s2, "train summaries differ");
}

#[test]
fn train_failure_names_the_law() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_small(&data);
    let out = kahm(
        &[
            "train",
            data.to_str().unwrap(),
            "--out",
            tmp.path().join("m").to_str().unwrap(),
            "--clusters",
            "999",
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 2);
    let record = stderr_record(&out);
    assert_eq!(record["category"], "validation");
    let msg = record["error"].as_str().unwrap();
    assert!(msg.contains("law00"), "law not named: {msg}");
    assert!(msg.contains("999"), "requested count not shown: {msg}");
}

#[test]
fn invalid_kahm_jobs_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_small(&data);
    let out = kahm(
        &[
            "train",
            data.to_str().unwrap(),
            "--out",
            tmp.path().join("m").to_str().unwrap(),
            "--clusters",
            "2",
        ],
        &[("KAHM_JOBS", "many")],
    );
    assert_eq!(exit_code(&out), 2);
    assert_eq!(stderr_record(&out)["category"], "validation");
}

/// Full pipeline: generate, train, evaluate with the lexical baseline and a
/// self-comparison, then ablate. Covers the cross-command contracts.
#[test]
fn pipeline_evaluate_and_ablate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    gen_small(&data);
    train_small(&data, &model, &[]);

    let registry = model.join("registry.khr");
    let eval1 = tmp.path().join("eval1");
    let base_args = |out_dir: &Path| {
        vec![
            "evaluate".to_string(),
            "--registry".into(),
            registry.display().to_string(),
            "--corpus".into(),
            data.join("corpus_semantic.manifest").display().to_string(),
            "--queries".into(),
            data.join("test_queries.manifest").display().to_string(),
            "--cutoffs".into(),
            "3,5".into(),
            "--bootstrap".into(),
            "400".into(),
            "--out".into(),
            out_dir.display().to_string(),
        ]
    };

    let mut args1: Vec<String> = base_args(&eval1);
    args1.extend([
        "--lexical-corpus".to_string(),
        data.join("corpus_lexical.manifest").display().to_string(),
        "--sweep".to_string(),
        "--macro".to_string(),
    ]);
    let out = kahm(&args1.iter().map(String::as_str).collect::<Vec<_>>(), &[]);
    assert_ok(&out);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval1.join("report.json")).unwrap())
            .unwrap();
    let rows = report["rows"].as_array().unwrap();
    let systems: BTreeSet<&str> = rows.iter().map(|r| r["system"].as_str().unwrap()).collect();
    assert_eq!(systems, BTreeSet::from(["kahm", "lexical"]));
    let modes: BTreeSet<&str> = rows.iter().map(|r| r["mode"].as_str().unwrap()).collect();
    assert_eq!(modes, BTreeSet::from(["micro", "macro"]));
    // 2 systems x 2 cutoffs x 6 metrics x 2 modes.
    assert_eq!(rows.len(), 48);
    assert!(report["sweep"]["selected"].is_object(), "sweep selects a row");
    assert_eq!(report["l2_mass"].as_object().unwrap().len(), 2);
    assert!(report["timing"].is_null(), "timing must stay out of the report file");
    assert!(eval1.join("run_kahm.json").exists());
    assert!(eval1.join("run_lexical.json").exists());

    // Self-comparison: replaying the primary run file yields deltas of
    // exactly zero with degenerate intervals.
    let eval2 = tmp.path().join("eval2");
    let mut args2 = base_args(&eval2);
    args2.extend([
        "--compare".to_string(),
        eval1.join("run_kahm.json").display().to_string(),
    ]);
    let out = kahm(&args2.iter().map(String::as_str).collect::<Vec<_>>(), &[]);
    assert_ok(&out);
    let report2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval2.join("report.json")).unwrap())
            .unwrap();
    let deltas = report2["deltas"].as_array().unwrap();
    assert_eq!(deltas.len(), 12, "2 cutoffs x 6 metrics, one pair");
    for d in deltas {
        assert_eq!(d["system_a"], "kahm");
        assert_eq!(d["system_b"], "kahm-2");
        assert_eq!(d["mean"].as_f64().unwrap(), 0.0);
        assert_eq!(d["ci_lo"].as_f64().unwrap(), 0.0);
        assert_eq!(d["ci_hi"].as_f64().unwrap(), 0.0);
    }

    // A single requested cutoff produces exactly one cutoff block.
    let eval3 = tmp.path().join("eval3");
    let out = kahm(
        &[
            "evaluate",
            "--registry",
            registry.to_str().unwrap(),
            "--corpus",
            data.join("corpus_semantic.manifest").to_str().unwrap(),
            "--queries",
            data.join("test_queries.manifest").to_str().unwrap(),
            "--cutoffs",
            "3",
            "--bootstrap",
            "0",
            "--out",
            eval3.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&out);
    let report3: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval3.join("report.json")).unwrap())
            .unwrap();
    let cutoffs: BTreeSet<u64> = report3["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["cutoff"].as_u64().unwrap())
        .collect();
    assert_eq!(cutoffs, BTreeSet::from([3]));

    // Ablation: more clusters fit this data strictly better.
    let ablate_dir = tmp.path().join("ablate");
    let out = kahm(
        &[
            "ablate-clusters",
            data.to_str().unwrap(),
            "--cluster-grid",
            "1,2",
            "--seed",
            "5",
            "--out",
            ablate_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&out);
    let ablation: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ablate_dir.join("ablation.json")).unwrap())
            .unwrap();
    let rows = ablation.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["clusters"], 1);
    assert_eq!(rows[1]["clusters"], 2);
    assert!(
        rows[1]["mse"].as_f64().unwrap() < rows[0]["mse"].as_f64().unwrap(),
        "2 clusters should fit better than 1"
    );
}

#[test]
fn evaluate_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    gen_small(&data);
    train_small(&data, &model, &[]);
    let run = |out_dir: &Path| {
        let out = kahm(
            &[
                "evaluate",
                "--registry",
                model.join("registry.khr").to_str().unwrap(),
                "--corpus",
                data.join("corpus_semantic.manifest").to_str().unwrap(),
                "--queries",
                data.join("test_queries.manifest").to_str().unwrap(),
                "--cutoffs",
                "3,5",
                "--bootstrap",
                "300",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            &[],
        );
        assert_ok(&out);
    };
    let e1 = tmp.path().join("e1");
    let e2 = tmp.path().join("e2");
    run(&e1);
    run(&e2);
    assert_dirs_byte_identical(&e1, &e2);
}

#[test]
fn evaluate_counts_run_file_id_mismatches() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    gen_small(&data);
    train_small(&data, &model, &[]);
    let eval1 = tmp.path().join("eval1");
    let out = kahm(
        &[
            "evaluate",
            "--registry",
            model.join("registry.khr").to_str().unwrap(),
            "--corpus",
            data.join("corpus_semantic.manifest").to_str().unwrap(),
            "--queries",
            data.join("test_queries.manifest").to_str().unwrap(),
            "--cutoffs",
            "3",
            "--bootstrap",
            "0",
            "--out",
            eval1.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&out);

    // Drop four queries and corrupt one id.
    let mut run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval1.join("run_kahm.json")).unwrap())
            .unwrap();
    let queries = run["queries"].as_array_mut().unwrap();
    queries.truncate(20);
    queries[0]["id"] = serde_json::Value::String("bogus".into());
    let bad_path = tmp.path().join("bad_run.json");
    std::fs::write(&bad_path, serde_json::to_string(&run).unwrap()).unwrap();

    let out = kahm(
        &[
            "evaluate",
            "--registry",
            model.join("registry.khr").to_str().unwrap(),
            "--corpus",
            data.join("corpus_semantic.manifest").to_str().unwrap(),
            "--queries",
            data.join("test_queries.manifest").to_str().unwrap(),
            "--compare",
            bad_path.to_str().unwrap(),
            "--cutoffs",
            "3",
            "--bootstrap",
            "0",
            "--out",
            tmp.path().join("eval2").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 3);
    let record = stderr_record(&out);
    assert_eq!(record["category"], "data");
    let msg = record["error"].as_str().unwrap();
    assert!(msg.contains("5 missing"), "missing count absent: {msg}");
    assert!(msg.contains("1 unexpected"), "unexpected count absent: {msg}");
}

#[test]
fn missing_data_directory_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kahm(
        &[
            "train",
            tmp.path().join("nope").to_str().unwrap(),
            "--out",
            tmp.path().join("m").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 3);
    assert_eq!(stderr_record(&out)["category"], "data");
}

#[test]
fn corrupt_registry_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    gen_small(&data);
    train_small(&data, &model, &[]);
    let reg_path = model.join("registry.khr");
    let mut bytes = std::fs::read(&reg_path).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(&reg_path, bytes).unwrap();
    let out = kahm(
        &[
            "evaluate",
            "--registry",
            reg_path.to_str().unwrap(),
            "--corpus",
            data.join("corpus_semantic.manifest").to_str().unwrap(),
            "--queries",
            data.join("test_queries.manifest").to_str().unwrap(),
            "--cutoffs",
            "3",
            "--out",
            tmp.path().join("e").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 3);
    assert_eq!(stderr_record(&out)["category"], "data");
}

#[test]
fn oversized_cutoff_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    gen_small(&data);
    train_small(&data, &model, &[]);
    // The small benchmark's corpus has 12 units.
    let out = kahm(
        &[
            "evaluate",
            "--registry",
            model.join("registry.khr").to_str().unwrap(),
            "--corpus",
            data.join("corpus_semantic.manifest").to_str().unwrap(),
            "--queries",
            data.join("test_queries.manifest").to_str().unwrap(),
            "--cutoffs",
            "3,5000",
            "--out",
            tmp.path().join("e").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 2);
    let record = stderr_record(&out);
    assert_eq!(record["category"], "validation");
    assert!(record["error"].as_str().unwrap().contains("5000"));
}
