//! Command-line front end for originality scoring.
//!
//! Verbs: `score`, `detect`, `generate`, `calibrate`, `evaluate`, `density`.
//! Exit codes are a stable contract: 0 = success (or verdict "human"),
//! 1 = verdict "llm", 2 = input/config error, 3 = backend failure,
//! 4 = profile/backend mismatch.
//!
//! Every command is deterministic given its config and inputs; rerunning
//! overwrites output files with identical bytes. Wall-clock timestamps are
//! confined to the `run_meta.json` sidecar (and honor `SPOT_CREATED_AT`
//! when set, so even that file can be pinned).

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spot_core::backend::ngram::{train_ngram, NgramModel, NgramParams};
use spot_core::backend::{greedy_generate, BackendError, HarnessBackend, ScoringModel};
use spot_core::calibrate::{
    accuracy, calibrate_percentile, calibrate_sweep, kde_density, load_profile, save_profile,
    ScoreSample, DEFAULT_BANDWIDTH, DEFAULT_GRID_POINTS,
};
use spot_core::config::{BackendHandle, ConfigError, RunConfig};
use spot_core::corpus::{
    ingest, make_pairs, save_pairs, split_docs, CorpusFormat, CorpusSpec,
};
use spot_core::matrix::{run_matrix, MatrixDocument, MatrixError};
use spot_core::score::{
    classify, score_sequence, ScoreError, TokenSequence, VerdictLabel,
};

const EXIT_LLM: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_PROFILE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "spot",
    version,
    about = "Rank-based originality scoring: classify text as human- or model-written"
)]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Globals {
    /// Run configuration (TOML) registering backends.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Backend registry name; defaults to the config's default_backend.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Threshold profile JSON for detect.
    #[arg(long, global = true)]
    profile: Option<PathBuf>,
    /// Context length (tokens never scored / conditioning prefix).
    #[arg(long, global = true)]
    context_len: Option<usize>,
    /// Completion length s (tokens generated or scored).
    #[arg(long, global = true)]
    completion_len: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for corpus splitting/subsampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pre-tokenized input: comma- or space-separated token ids (bypasses
    /// the backend tokenizer).
    #[arg(long, global = true)]
    tokens: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Score a text or token file: per-token and aggregate originality.
    Score {
        /// UTF-8 text file ("-" for stdin). Ignored when --tokens is given.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score and classify against a threshold profile.
    Detect {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Greedy-generate a completion from a context.
    Generate {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Derive a threshold profile from labeled score files.
    Calibrate {
        /// File of human-text aggregate scores (JSON array or one per line).
        #[arg(long)]
        human: Option<PathBuf>,
        /// File of model-text aggregate scores.
        #[arg(long)]
        llm: PathBuf,
        /// sweep (needs --human) or percentile (needs --p, llm only).
        #[arg(long, default_value = "sweep")]
        method: String,
        /// Percentile in (0,1) for --method percentile.
        #[arg(long)]
        p: Option<f64>,
        /// Evaluator id recorded in the profile; defaults to the selected
        /// backend's model id.
        #[arg(long)]
        evaluator: Option<String>,
    },
    /// Run the cross-model evaluation matrix over a corpus.
    Evaluate {
        /// Corpus file or directory.
        #[arg(long)]
        corpus: PathBuf,
        /// plain_text or jsonl.
        #[arg(long, default_value = "plain_text")]
        corpus_format: String,
        /// Text field name for jsonl corpora.
        #[arg(long, default_value = "text")]
        jsonl_field: String,
        /// Keep at most this many documents.
        #[arg(long)]
        limit: Option<usize>,
        /// Registered backend names to evaluate (comma-separated). Without
        /// this, an n-gram model is trained on a seeded half of the corpus
        /// and evaluated on the held-out half.
        #[arg(long)]
        models: Option<String>,
        /// Pivot backend owning the pair token space; defaults to the first
        /// model.
        #[arg(long)]
        pivot: Option<String>,
    },
    /// Kernel density estimate of a score file, as CSV.
    Density {
        /// Score file (JSON array or one float per line).
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
        bandwidth: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        grid_points: usize,
        /// Sample label recorded in metadata: human or llm.
        #[arg(long, default_value = "llm")]
        label: String,
    },
}

/// Error carrying the process exit code.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn backend(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_BACKEND,
            message: message.into(),
        }
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> CliError {
        match &e {
            ScoreError::Backend(_) => CliError::backend(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> CliError {
        CliError::backend(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        match &e {
            ConfigError::Backend(_) => CliError::backend(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<spot_core::calibrate::CalibrateError> for CliError {
    fn from(e: spot_core::calibrate::CalibrateError) -> CliError {
        CliError::input(e.to_string())
    }
}

impl From<spot_core::corpus::CorpusError> for CliError {
    fn from(e: spot_core::corpus::CorpusError) -> CliError {
        match &e {
            spot_core::corpus::CorpusError::Backend(_) => CliError::backend(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<MatrixError> for CliError {
    fn from(e: MatrixError) -> CliError {
        match &e {
            MatrixError::Partial { .. } => CliError::backend(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn init_logging(cli: &Cli) {
    let mut builder = env_logger::Builder::from_default_env();
    if std::env::var_os("RUST_LOG").is_none() {
        if let Some(filter) = cli
            .globals
            .config
            .as_deref()
            .and_then(|p| RunConfig::load(p).ok())
            .and_then(|c| c.log)
        {
            builder.parse_filters(&filter);
        }
    }
    let _ = builder.format_timestamp(None).try_init();
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Score { ref input } => cmd_score(&cli.globals, input.as_deref(), &argv),
        Command::Detect { ref input } => cmd_detect(&cli.globals, input.as_deref(), &argv),
        Command::Generate { ref input } => cmd_generate(&cli.globals, input.as_deref(), &argv),
        Command::Calibrate {
            ref human,
            ref llm,
            ref method,
            p,
            ref evaluator,
        } => cmd_calibrate(
            &cli.globals,
            human.as_deref(),
            llm,
            method,
            p,
            evaluator.as_deref(),
            &argv,
        ),
        Command::Evaluate {
            ref corpus,
            ref corpus_format,
            ref jsonl_field,
            limit,
            ref models,
            ref pivot,
        } => cmd_evaluate(
            &cli.globals,
            corpus,
            corpus_format,
            jsonl_field,
            limit,
            models.as_deref(),
            pivot.as_deref(),
            &argv,
        ),
        Command::Density {
            ref scores,
            bandwidth,
            grid_points,
            ref label,
        } => cmd_density(&cli.globals, scores, bandwidth, grid_points, label, &argv),
    }
}

// ---------------------------------------------------------------- plumbing

fn require_config(globals: &Globals) -> Result<RunConfig, CliError> {
    let path = globals.config.as_deref().ok_or_else(|| {
        CliError::input("this command needs --config pointing at a run configuration")
    })?;
    Ok(RunConfig::load(path)?)
}

fn open_selected_backend(globals: &Globals) -> Result<(String, BackendHandle), CliError> {
    let config = require_config(globals)?;
    let name = globals
        .backend
        .clone()
        .unwrap_or_else(|| config.default_backend.clone());
    let handle = config.open_backend(&name)?;
    Ok((name, handle))
}

fn parse_token_list(raw: &str) -> Result<Vec<u32>, CliError> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u32>()
                .map_err(|_| CliError::input(format!("not a token id: {s:?}")))
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String, CliError> {
    if path == Path::new("-") {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| CliError::input(format!("reading stdin: {e}")))?;
        Ok(text)
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))
    }
}

/// Resolve the scored token list: --tokens verbatim, or tokenize a text
/// file with the backend's own tokenizer.
fn input_tokens(
    globals: &Globals,
    input: Option<&Path>,
    handle: &BackendHandle,
) -> Result<Vec<u32>, CliError> {
    if let Some(raw) = &globals.tokens {
        return parse_token_list(raw);
    }
    let path = input.ok_or_else(|| CliError::input("provide --input FILE or --tokens IDS"))?;
    let text = read_text(path)?;
    let codec = handle.codec().ok_or_else(|| {
        CliError::input(
            "this backend tokenizes server-side; pass pre-tokenized ids via --tokens",
        )
    })?;
    Ok(codec.encode(&text))
}

fn read_scores(path: &Path) -> Result<Vec<f64>, CliError> {
    let raw = read_text(path)?;
    if let Ok(scores) = serde_json::from_str::<Vec<f64>>(&raw) {
        return Ok(scores);
    }
    raw.split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::input(format!("not a score: {s:?} in {}", path.display())))
        })
        .collect()
}

fn created_at() -> String {
    std::env::var("SPOT_CREATED_AT").unwrap_or_else(|_| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs().to_string())
            .unwrap_or_else(|_| "0".to_string())
    })
}

/// Write `contents` into the output directory, creating it as needed.
fn write_artifact(out: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::input(format!("creating {}: {e}", out.display())))?;
    let path = out.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::input(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}

/// The one artifact allowed to differ between reruns: command line and
/// wall-clock timestamp.
fn write_run_meta(out: &Path, argv: &[String]) -> Result<(), CliError> {
    let meta = json!({
        "created_at": created_at(),
        "argv": argv,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_artifact(out, "run_meta.json", &(serde_json::to_string_pretty(&meta).unwrap() + "\n"))?;
    Ok(())
}

fn out_dir(globals: &Globals, config: Option<&RunConfig>) -> Option<PathBuf> {
    globals
        .out
        .clone()
        .or_else(|| config.map(|c| c.output_dir.clone()))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

// ---------------------------------------------------------------- commands

fn cmd_score(globals: &Globals, input: Option<&Path>, argv: &[String]) -> Result<u8, CliError> {
    let (_, handle) = open_selected_backend(globals)?;
    let tokens = input_tokens(globals, input, &handle)?;
    let context_len = globals.context_len.unwrap_or(0);
    if tokens.len() <= context_len {
        return Err(CliError::input("empty completion"));
    }
    let seq = TokenSequence::new(tokens, context_len)?;
    let report = score_sequence(&seq, &handle)?;
    print_json(&report);
    if let Some(out) = out_dir(globals, None) {
        write_artifact(
            &out,
            "score_report.json",
            &(serde_json::to_string_pretty(&report).unwrap() + "\n"),
        )?;
        write_run_meta(&out, argv)?;
    }
    Ok(0)
}

fn cmd_detect(globals: &Globals, input: Option<&Path>, argv: &[String]) -> Result<u8, CliError> {
    let config = require_config(globals)?;
    let name = globals
        .backend
        .clone()
        .unwrap_or_else(|| config.default_backend.clone());
    let handle = config.open_backend(&name)?;

    let profile_path = globals
        .profile
        .clone()
        .or_else(|| config.profile.clone())
        .ok_or_else(|| CliError::input("detect needs --profile (or a profile in the config)"))?;
    let profile = load_profile(&profile_path)?;
    if profile.model_id != handle.model_id() {
        return Err(CliError {
            code: EXIT_PROFILE,
            message: format!(
                "profile evaluator mismatch: profile is for {:?}, backend is {:?}",
                profile.model_id,
                handle.model_id()
            ),
        });
    }

    let tokens = input_tokens(globals, input, &handle)?;
    let context_len = globals.context_len.unwrap_or(0);
    if tokens.len() <= context_len {
        return Err(CliError::input("empty completion"));
    }
    let seq = TokenSequence::new(tokens, context_len)?;
    let report = score_sequence(&seq, &handle)?;
    let verdict = classify(report.aggregate, &profile)?;
    print_json(&verdict);
    if let Some(out) = out_dir(globals, Some(&config)) {
        write_artifact(
            &out,
            "verdict.json",
            &(serde_json::to_string_pretty(&verdict).unwrap() + "\n"),
        )?;
        write_run_meta(&out, argv)?;
    }
    Ok(match verdict.label {
        VerdictLabel::Human => 0,
        VerdictLabel::Llm => EXIT_LLM,
    })
}

fn cmd_generate(globals: &Globals, input: Option<&Path>, argv: &[String]) -> Result<u8, CliError> {
    let config = require_config(globals)?;
    let name = globals
        .backend
        .clone()
        .unwrap_or_else(|| config.default_backend.clone());
    let handle = config.open_backend(&name)?;
    let context = input_tokens(globals, input, &handle)?;
    if context.is_empty() {
        return Err(CliError::input("empty context: nothing to condition on"));
    }
    let s = globals.completion_len.unwrap_or(config.completion_len);
    let completion = greedy_generate(&handle, &context, s)?;
    let text = handle.codec().map(|c| c.decode(&completion));
    let doc = json!({
        "model": handle.model_id(),
        "context_len": context.len(),
        "tokens": completion,
        "text": text,
    });
    print_json(&doc);
    if let Some(out) = out_dir(globals, Some(&config)) {
        write_artifact(
            &out,
            "generation.json",
            &(serde_json::to_string_pretty(&doc).unwrap() + "\n"),
        )?;
        write_run_meta(&out, argv)?;
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_calibrate(
    globals: &Globals,
    human: Option<&Path>,
    llm: &Path,
    method: &str,
    p: Option<f64>,
    evaluator: Option<&str>,
    argv: &[String],
) -> Result<u8, CliError> {
    let evaluator = match evaluator {
        Some(name) => name.to_string(),
        None => {
            let (_, handle) = open_selected_backend(globals)?;
            handle.model_id().to_string()
        }
    };
    let llm_sample = ScoreSample::new(read_scores(llm)?, VerdictLabel::Llm, &evaluator)?;

    let (profile, summary) = match method {
        "sweep" => {
            let human_path = human.ok_or_else(|| {
                CliError::input("--method sweep needs --human SCORES as well as --llm")
            })?;
            let human_sample =
                ScoreSample::new(read_scores(human_path)?, VerdictLabel::Human, &evaluator)?;
            let outcome = calibrate_sweep(&human_sample, &llm_sample)?;
            if outcome.degenerate {
                eprintln!(
                    "warning: degenerate calibration — no threshold separates the samples"
                );
            }
            let rates = accuracy(&human_sample, &llm_sample, &outcome.profile);
            (
                outcome.profile,
                json!({
                    "balanced_accuracy": outcome.balanced_accuracy,
                    "degenerate": outcome.degenerate,
                    "rates": rates,
                }),
            )
        }
        "percentile" => {
            let p = p.unwrap_or(0.95);
            let profile = calibrate_percentile(&llm_sample, p)?;
            (profile, json!({ "p": p }))
        }
        other => {
            return Err(CliError::input(format!(
                "unknown calibration method {other:?} (sweep or percentile)"
            )))
        }
    };

    print_json(&profile);
    let out = out_dir(globals, None).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::input(format!("creating {}: {e}", out.display())))?;
    save_profile(&profile, &out.join("profile.json"))
        .map_err(|e| CliError::input(e.to_string()))?;
    write_artifact(
        &out,
        "calibration.json",
        &(serde_json::to_string_pretty(&summary).unwrap() + "\n"),
    )?;
    write_run_meta(&out, argv)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    globals: &Globals,
    corpus: &Path,
    corpus_format: &str,
    jsonl_field: &str,
    limit: Option<usize>,
    models: Option<&str>,
    pivot: Option<&str>,
    argv: &[String],
) -> Result<u8, CliError> {
    let config = globals.config.as_deref().map(RunConfig::load).transpose()?;
    let context_len = globals
        .context_len
        .or(config.as_ref().map(|c| c.context_len))
        .unwrap_or(24);
    let completion_len = globals
        .completion_len
        .or(config.as_ref().map(|c| c.completion_len))
        .unwrap_or(40);
    let seed = globals.seed.unwrap_or(0);
    let out = out_dir(globals, config.as_ref())
        .ok_or_else(|| CliError::input("evaluate needs --out (or an output_dir in the config)"))?;

    let format = match corpus_format {
        "plain_text" => CorpusFormat::PlainText,
        "jsonl" => CorpusFormat::Jsonl {
            field: jsonl_field.to_string(),
        },
        other => {
            return Err(CliError::input(format!(
                "unknown corpus format {other:?} (plain_text or jsonl)"
            )))
        }
    };
    let spec = CorpusSpec {
        path: corpus.to_path_buf(),
        format,
        min_tokens: context_len + completion_len,
        limit,
        seed,
    };
    let (docs, ingest_report) = ingest(&spec)?;

    // Either evaluate registered backends over the whole corpus, or train a
    // fresh model on a seeded half and evaluate it on the held-out half.
    let mut owned: Vec<(String, NgramModel)> = Vec::new();
    let pair_docs = match models {
        Some(list) => {
            let config = config
                .as_ref()
                .ok_or_else(|| CliError::input("--models needs --config registrations"))?;
            for name in list.split(',').filter(|s| !s.is_empty()) {
                let handle = config.open_backend(name)?;
                match handle {
                    BackendHandle::Ngram(model) => owned.push((name.to_string(), model)),
                    BackendHandle::Remote(_) => {
                        return Err(CliError::input(format!(
                            "backend {name:?} is remote; matrix evaluation needs local \
                             tokenizers, so register n-gram backends"
                        )))
                    }
                }
            }
            docs
        }
        None => {
            let (train_half, held_out) = split_docs(&docs, seed);
            if train_half.is_empty() || held_out.is_empty() {
                return Err(CliError::input(
                    "corpus too small to split into train and held-out halves",
                ));
            }
            let texts: Vec<&str> = train_half.iter().map(|d| d.text.as_str()).collect();
            let model = train_ngram(&texts, &NgramParams::default(), "ngram-half1")
                .map_err(CliError::from)?;
            let models_dir = out.join("models");
            std::fs::create_dir_all(&models_dir)
                .map_err(|e| CliError::input(format!("creating {}: {e}", models_dir.display())))?;
            model.save(
                &models_dir.join("ngram-half1.spotngm"),
                &models_dir.join("ngram-half1.vocab.json"),
            )?;
            owned.push(("ngram-half1".to_string(), model));
            held_out
        }
    };
    if owned.is_empty() {
        return Err(CliError::input("no models selected for evaluation"));
    }

    let registry: BTreeMap<String, &dyn HarnessBackend> = owned
        .iter()
        .map(|(name, model)| (name.clone(), model as &dyn HarnessBackend))
        .collect();
    let pivot = pivot
        .map(str::to_string)
        .unwrap_or_else(|| registry.keys().next().expect("non-empty").clone());

    let (pairs, pair_report) = make_pairs(&pair_docs, &registry, &pivot, context_len, completion_len)?;
    let matrix = run_matrix(&pairs, &registry)?;
    let document = MatrixDocument::new(matrix)
        .map_err(|e| CliError::input(e.to_string()))?;

    save_pairs(&pairs, &{
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::input(format!("creating {}: {e}", out.display())))?;
        out.join("pairs.jsonl")
    })?;
    write_artifact(&out, "matrix.csv", &document.matrix.to_csv())?;
    write_artifact(&out, "matrix.json", &document.to_json())?;
    write_artifact(
        &out,
        "ingest_report.json",
        &(serde_json::to_string_pretty(&json!({
            "ingest": ingest_report,
            "pairs": pair_report,
        }))
        .unwrap()
            + "\n"),
    )?;
    write_run_meta(&out, argv)?;
    print_json(&document);
    Ok(0)
}

fn cmd_density(
    globals: &Globals,
    scores: &Path,
    bandwidth: f64,
    grid_points: usize,
    label: &str,
    argv: &[String],
) -> Result<u8, CliError> {
    let label = match label {
        "human" => VerdictLabel::Human,
        "llm" => VerdictLabel::Llm,
        other => {
            return Err(CliError::input(format!(
                "unknown label {other:?} (human or llm)"
            )))
        }
    };
    let sample = ScoreSample::new(read_scores(scores)?, label, "density")?;
    let curve = kde_density(&sample, bandwidth, grid_points)?;
    let summary = json!({
        "points": curve.grid.len(),
        "bandwidth": curve.bandwidth,
        "integral": curve.integral(),
        "grid_min": curve.grid.first(),
        "grid_max": curve.grid.last(),
    });
    print_json(&summary);
    let out = out_dir(globals, None).unwrap_or_else(|| PathBuf::from("."));
    write_artifact(&out, "density.csv", &curve.to_csv())?;
    write_artifact(
        &out,
        "density.json",
        &(serde_json::to_string_pretty(&summary).unwrap() + "\n"),
    )?;
    write_run_meta(&out, argv)?;
    Ok(0)
}
