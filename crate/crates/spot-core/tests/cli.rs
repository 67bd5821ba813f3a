//! End-to-end tests of the `spot` binary: exit-code contract, artifact
//! shapes, and byte-level determinism of repeated runs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spot_core::backend::ngram::{train_ngram, NgramParams};
use spot_core::backend::ScoringModel;
use spot_core::calibrate::save_profile;
use spot_core::corpus::{ingest, CorpusSpec};

fn spot_bin() -> &'static str {
    env!("CARGO_BIN_EXE_spot")
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

fn run(args: &[&str]) -> Output {
    Command::new(spot_bin())
        .args(args)
        .env("SPOT_CREATED_AT", "2000-01-01T00:00:00Z")
        .output()
        .expect("spot binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&output.stdout);
    serde_json::from_str(&text).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}):\n{text}\nstderr: {}",
            String::from_utf8_lossy(&output.stderr)
        )
    })
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

/// Train a model on the first 20 fixture docs, persist it, and write a
/// config registering it. Returns (config path, workdir guard).
fn workspace() -> (PathBuf, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let (docs, _) = ingest(&CorpusSpec::plain_text(corpus_dir())).unwrap();
    let texts: Vec<&str> = docs[..20].iter().map(|d| d.text.as_str()).collect();
    let model = train_ngram(&texts, &NgramParams::default(), "cli-model").unwrap();
    let models = dir.path().join("models");
    std::fs::create_dir_all(&models).unwrap();
    model
        .save(
            &models.join("cli-model.spotngm"),
            &models.join("cli-model.vocab.json"),
        )
        .unwrap();

    let config = dir.path().join("spot.toml");
    std::fs::write(
        &config,
        "version = 1\n\
         default_backend = \"cli-model\"\n\
         context_len = 16\n\
         completion_len = 24\n\n\
         [backends.cli-model]\n\
         kind = \"ngram\"\n\
         model_path = \"models/cli-model.spotngm\"\n\
         vocab_path = \"models/cli-model.vocab.json\"\n",
    )
    .unwrap();
    (config, dir)
}

#[test]
fn score_reports_json_and_exits_zero() {
    let (config, dir) = workspace();
    let input = dir.path().join("sample.txt");
    std::fs::write(&input, "the quiet harbor waits beyond the old stone bridge .").unwrap();

    let out = run(&[
        "score",
        "--config",
        config.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert!(report["aggregate"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["model_id"], "cli-model");
    assert_eq!(
        report["per_token"].as_array().unwrap().len(),
        10,
        "one score per token"
    );
}

#[test]
fn score_accepts_pretokenized_ids() {
    let (config, _dir) = workspace();
    let out = run(&[
        "score",
        "--config",
        config.to_str().unwrap(),
        "--tokens",
        "1,2,3,4",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["per_token"].as_array().unwrap().len(), 4);
}

#[test]
fn empty_input_exits_two() {
    let (config, dir) = workspace();
    let input = dir.path().join("empty.txt");
    std::fs::write(&input, "").unwrap();
    let out = run(&[
        "score",
        "--config",
        config.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty completion"));
}

#[test]
fn missing_config_exits_two() {
    let out = run(&["score", "--tokens", "1,2"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn unreachable_backend_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("remote.toml");
    std::fs::write(
        &config,
        "version = 1\n\
         default_backend = \"dead\"\n\n\
         [backends.dead]\n\
         kind = \"remote\"\n\
         endpoint = \"http://127.0.0.1:9\"\n\
         model_name = \"dead\"\n\
         timeout_ms = 100\n\
         max_batch = 1\n",
    )
    .unwrap();
    let out = run(&[
        "score",
        "--config",
        config.to_str().unwrap(),
        "--tokens",
        "0,1",
    ]);
    assert_eq!(
        code(&out),
        3,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("backend unavailable"));
}

#[test]
fn calibrate_sweep_finds_the_midpoint_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let human = dir.path().join("human.txt");
    let llm = dir.path().join("llm.txt");
    std::fs::write(&human, "1.0 1.2 1.4\n").unwrap();
    std::fs::write(&llm, "0.01 0.02\n").unwrap();
    let out_dir = dir.path().join("out");

    let out = run(&[
        "calibrate",
        "--human",
        human.to_str().unwrap(),
        "--llm",
        llm.to_str().unwrap(),
        "--evaluator",
        "cli-model",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let profile = stdout_json(&out);
    assert_eq!(profile["rho"].as_f64().unwrap(), 0.51);
    assert_eq!(profile["evaluator"], "cli-model");

    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("profile.json")).unwrap())
            .unwrap();
    assert_eq!(saved["rho"].as_f64().unwrap(), 0.51);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("calibration.json")).unwrap())
            .unwrap();
    assert_eq!(summary["balanced_accuracy"].as_f64().unwrap(), 1.0);
    assert_eq!(summary["degenerate"], false);
}

#[test]
fn calibrate_rejects_out_of_range_percentile() {
    let dir = tempfile::tempdir().unwrap();
    let llm = dir.path().join("llm.txt");
    std::fs::write(&llm, "0.01 0.02 0.03\n").unwrap();
    let out = run(&[
        "calibrate",
        "--llm",
        llm.to_str().unwrap(),
        "--method",
        "percentile",
        "--p",
        "1.0",
        "--evaluator",
        "x",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("percentile"));
}

#[test]
fn detect_exit_codes_cover_verdicts_and_mismatches() {
    let (config, dir) = workspace();
    let (docs, _) = ingest(&CorpusSpec::plain_text(corpus_dir())).unwrap();

    // Calibrate a profile for this model from a human/llm score gap.
    let human_sample = spot_core::calibrate::ScoreSample::new(
        vec![1.0, 1.2, 1.4],
        spot_core::score::VerdictLabel::Human,
        "cli-model",
    )
    .unwrap();
    let llm_sample = spot_core::calibrate::ScoreSample::new(
        vec![0.01, 0.02],
        spot_core::score::VerdictLabel::Llm,
        "cli-model",
    )
    .unwrap();
    let profile = spot_core::calibrate::calibrate_sweep(&human_sample, &llm_sample)
        .unwrap()
        .profile;
    let profile_path = dir.path().join("profile.json");
    save_profile(&profile, &profile_path).unwrap();

    // Held-out fixture text scores like human text → exit 0.
    let human_input = dir.path().join("human.txt");
    std::fs::write(&human_input, &docs[40].text).unwrap();
    let out = run(&[
        "detect",
        "--config",
        config.to_str().unwrap(),
        "--profile",
        profile_path.to_str().unwrap(),
        "--input",
        human_input.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["label"], "human");

    // The model's own greedy text scores 0 → llm verdict → exit 1.
    let ctx = dir.path().join("ctx.txt");
    std::fs::write(&ctx, "the tide turns and the harbor").unwrap();
    let gen_out = run(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--input",
        ctx.to_str().unwrap(),
        "--completion-len",
        "32",
    ]);
    assert_eq!(code(&gen_out), 0);
    let generated_text = stdout_json(&gen_out)["text"].as_str().unwrap().to_string();
    let llm_input = dir.path().join("llm.txt");
    // Keep the generating context in front so detect scores the machine
    // continuation in context.
    std::fs::write(&llm_input, format!("the tide turns and the harbor {generated_text}")).unwrap();
    let out = run(&[
        "detect",
        "--config",
        config.to_str().unwrap(),
        "--profile",
        profile_path.to_str().unwrap(),
        "--context-len",
        "6",
        "--input",
        llm_input.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["label"], "llm");

    // A profile calibrated for another evaluator is refused → exit 4.
    let mut foreign = profile.clone();
    foreign.model_id = "someone-else".to_string();
    let foreign_path = dir.path().join("foreign.json");
    save_profile(&foreign, &foreign_path).unwrap();
    let out = run(&[
        "detect",
        "--config",
        config.to_str().unwrap(),
        "--profile",
        foreign_path.to_str().unwrap(),
        "--input",
        human_input.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch"));
}

#[test]
fn generate_emits_requested_length_and_decodes() {
    let (config, _dir) = workspace();
    let out = run(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--tokens",
        "1,2,3",
        "--completion-len",
        "5",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["tokens"].as_array().unwrap().len(), 5);
    assert!(doc["text"].as_str().is_some());
}

#[test]
fn evaluate_self_train_is_deterministic_and_zero_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let run_once = |tag: &str| -> PathBuf {
        let out_dir = dir.path().join(tag);
        let out = run(&[
            "evaluate",
            "--corpus",
            corpus_dir().to_str().unwrap(),
            "--limit",
            "16",
            "--seed",
            "7",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };

    let a = run_once("a");
    let b = run_once("b");
    for artifact in ["matrix.csv", "matrix.json", "pairs.jsonl", "ingest_report.json"] {
        assert_eq!(
            std::fs::read(a.join(artifact)).unwrap(),
            std::fs::read(b.join(artifact)).unwrap(),
            "{artifact} differs between identical runs"
        );
    }

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("matrix.json")).unwrap()).unwrap();
    let matrix = &doc["matrix"];
    assert_eq!(matrix["evaluators"], serde_json::json!(["ngram-half1"]));
    let sources: Vec<&str> = matrix["sources"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap())
        .collect();
    let human_col = sources.iter().position(|&s| s == "human").unwrap();
    let own_col = sources.iter().position(|&s| s == "ngram-half1").unwrap();
    let row = &matrix["cells"][0];
    assert_eq!(
        row[own_col]["mean"].as_f64().unwrap(),
        0.0,
        "self-scored greedy column must be exactly zero"
    );
    assert!(row[human_col]["mean"].as_f64().unwrap() > 0.0);

    // The trained model is persisted next to the artifacts and loadable.
    let model = spot_core::backend::ngram::NgramModel::load(
        &a.join("models/ngram-half1.spotngm"),
        &a.join("models/ngram-half1.vocab.json"),
    )
    .unwrap();
    assert_eq!(model.model_id(), "ngram-half1");
}

#[test]
fn density_writes_normalized_curve() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.txt");
    std::fs::write(&scores, "[0.12, 0.5, 0.5, 0.9, 1.4]\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "density",
        "--scores",
        scores.to_str().unwrap(),
        "--bandwidth",
        "0.05",
        "--grid-points",
        "801",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert!((summary["integral"].as_f64().unwrap() - 1.0).abs() <= 0.02);
    assert_eq!(summary["points"].as_u64().unwrap(), 801);

    let csv = std::fs::read_to_string(out_dir.join("density.csv")).unwrap();
    assert!(csv.starts_with("grid,density\n"));
    assert_eq!(csv.lines().count(), 802);
}
