use std::fmt::Display;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad input files, flags or configuration.
    Invalid,
    /// I/O, scorer or other failures while running.
    Runtime,
}

impl FailureKind {
    pub fn code(self) -> u8 {
        match self {
            FailureKind::Invalid => 1,
            FailureKind::Runtime => 2,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn invalid(self, context: impl Display) -> CliResult<T>;
    fn runtime(self, context: impl Display) -> CliResult<T>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn invalid(self, context: impl Display) -> CliResult<T> {
        self.map_err(|e| Failure {
            kind: FailureKind::Invalid,
            error: e.into().context(context.to_string()),
        })
    }

    fn runtime(self, context: impl Display) -> CliResult<T> {
        self.map_err(|e| Failure {
            kind: FailureKind::Runtime,
            error: e.into().context(context.to_string()),
        })
    }
}

pub fn invalid(message: impl Display) -> Failure {
    Failure {
        kind: FailureKind::Invalid,
        error: anyhow::anyhow!("{message}"),
    }
}

/// Stamped onto every artifact: tool version, the command, a digest of the
/// fully resolved configuration and the creation time.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub created: String,
}

impl Provenance {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        let json = serde_json::to_vec(config).expect("config serializes");
        Provenance {
            tool: "hsmp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: hex::encode(Sha256::digest(&json)),
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    /// Metadata line for line-delimited artifacts.
    pub fn jsonl_header(&self) -> Vec<String> {
        vec![serde_json::json!({ "_provenance": self }).to_string()]
    }

    /// Comment lines for CSV artifacts.
    pub fn csv_comments(&self) -> Vec<String> {
        vec![
            format!("{} {} {}", self.tool, self.version, self.command),
            format!("config_sha256 {}", self.config_sha256),
            format!("created {}", self.created),
        ]
    }
}

#[derive(Serialize)]
struct Document<'a, T> {
    #[serde(rename = "_provenance")]
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes a pretty JSON object with a `_provenance` field alongside the body's fields.
pub fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, body: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(&Document { provenance, body })
        .runtime("serializing output")?;
    fs::write(path, text + "\n").runtime(format!("writing {}", path.display()))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).runtime(format!("creating {}", path.display()))
}
