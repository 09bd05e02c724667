//! `omlab`: config-driven experiment runner over `om-core`.
//!
//! Every run reads one JSON config, writes its CSV/JSON artifacts plus
//! `manifest.json` into the output directory, and exits with
//! 0 (ok), 2 (schema or parameter error), 3 (hypothesis failure),
//! 4 (numerical failure) or 1 (I/O).

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use commands::{execute, Outcome};
pub use config::{Command, Loaded, MANIFEST_KEY};
pub use output::Artifact;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] om_core::Error),
    #[error("{0}")]
    Hypothesis(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Hypothesis(_) => 3,
            CliError::Core(e) => match e {
                om_core::Error::InvalidParameter { .. } | om_core::Error::Unsupported(_) => 2,
                om_core::Error::Hypothesis(_) => 3,
                om_core::Error::Numerical(_) => 4,
            },
            CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "omlab", version, about = "Small-ball, OM functional and MAP experiments on product measures")]
pub struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    pub command: Command,
    /// JSON config, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for Monte Carlo blocks and n-sweeps.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub omlab_manifest: u32,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: Value,
    pub versions: Versions,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub omlab: String,
    #[serde(rename = "om-core")]
    pub om_core: String,
}

/// sha256 of the compact JSON encoding (object keys sorted).
pub fn config_hash(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("json value serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn write_all(dir: &Path, loaded: &Loaded, outcome: &Outcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for a in &outcome.artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
    }
    let manifest = Manifest {
        omlab_manifest: 1,
        command: loaded.command.name().into(),
        seed: loaded.seed,
        config_sha256: config_hash(&loaded.config),
        config: loaded.config.clone(),
        versions: Versions {
            omlab: env!("CARGO_PKG_VERSION").into(),
            om_core: om_core::VERSION.into(),
        },
        outputs: outcome.artifacts.iter().map(|a| a.name.clone()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    std::fs::write(dir.join("timestamp.txt"), format!("{stamp}\n"))?;
    Ok(())
}

/// Load, execute and write; returns the summary lines.
pub fn run(args: &Args) -> Result<Vec<String>, CliError> {
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(CliError::Schema("--workers must be >= 1".into()));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let loaded = config::load(&args.config, args.command, args.seed)?;
    let outcome = execute(&loaded)?;
    write_all(&args.out, &loaded, &outcome)?;
    if let Some(msg) = outcome.hypothesis_failure {
        return Err(CliError::Hypothesis(msg));
    }
    Ok(outcome.summary)
}
