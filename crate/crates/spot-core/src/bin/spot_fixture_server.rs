//! Standalone conformance/fixture server speaking the rank-query wire
//! protocol. Useful for exercising the remote backend from the CLI or from
//! other-language clients: it serves a real n-gram model (trained on the fly
//! or loaded from disk) or one of several deliberately broken behaviours.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;

use spot_core::backend::fixture_server::{FixtureMode, FixtureServer};
use spot_core::backend::ngram::{train_ngram, NgramModel, NgramParams};

#[derive(Parser)]
#[command(
    name = "spot-fixture-server",
    version,
    about = "Serve the rank-query wire protocol from a local n-gram model"
)]
struct Cli {
    /// Bind address.
    #[arg(long, default_value = "127.0.0.1:0")]
    addr: String,
    /// Load a persisted model (.spotngm). Pair with --vocab.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Vocabulary sidecar for --model.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Train a throwaway model from this text file instead of loading one.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Model id for --train.
    #[arg(long, default_value = "fixture")]
    model_id: String,
    /// Misbehaviour instead of a model: rank-overflow, length-mismatch,
    /// missing-field, or error-doc.
    #[arg(long)]
    fault: Option<String>,
    /// HTTP status for --fault error-doc.
    #[arg(long, default_value_t = 503)]
    status: u16,
}

fn main() {
    env_logger::Builder::from_default_env()
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    let mode = match cli.fault.as_deref() {
        Some("rank-overflow") => FixtureMode::RankOverflow { vocab_size: 8 },
        Some("length-mismatch") => FixtureMode::LengthMismatch,
        Some("missing-field") => FixtureMode::MissingField,
        Some("error-doc") => FixtureMode::ErrorDocument {
            status: cli.status,
            code: "overloaded".to_string(),
            message: "synthetic failure".to_string(),
        },
        Some(other) => {
            eprintln!("error: unknown fault {other:?}");
            std::process::exit(2);
        }
        None => {
            let model = match load_model(&cli) {
                Ok(m) => m,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    std::process::exit(2);
                }
            };
            FixtureMode::Model(Arc::new(model))
        }
    };

    let server = FixtureServer::spawn_at(&cli.addr, mode);
    println!("{}", server.endpoint());
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn load_model(cli: &Cli) -> Result<NgramModel, String> {
    if let Some(model_path) = &cli.model {
        let vocab_path = cli
            .vocab
            .clone()
            .unwrap_or_else(|| model_path.with_extension("vocab.json"));
        return NgramModel::load(model_path, &vocab_path).map_err(|e| e.to_string());
    }
    if let Some(train_path) = &cli.train {
        let text =
            std::fs::read_to_string(train_path).map_err(|e| format!("reading corpus: {e}"))?;
        return train_ngram(&[text.as_str()], &NgramParams::default(), &cli.model_id)
            .map_err(|e| e.to_string());
    }
    Err("provide --model FILE, --train FILE, or --fault KIND".to_string())
}
