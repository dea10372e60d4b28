use std::path::{Path, PathBuf};

use eoplab_core::optim::{AncillaDims, OptimizerConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Eop,
    Hext,
    CodeBuild,
    LemmaVerify,
    ConverseCheck,
    GenError,
    Suite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eop => "eop",
            Command::Hext => "hext",
            Command::CodeBuild => "code-build",
            Command::LemmaVerify => "lemma-verify",
            Command::ConverseCheck => "converse-check",
            Command::GenError => "gen-error",
            Command::Suite => "suite",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Everything that determines a run. Reports embed the config they were produced from,
/// so a report file can be fed back through `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<PathBuf>,
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    /// Subsystem cut as `A1,A2|B1`; defaults to the two factors of the state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_dim: Option<usize>,
    #[serde(default)]
    pub quick: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            state: None,
            ensemble: None,
            protocol: None,
            l: None,
            cut: None,
            ref_dim: None,
            quick: false,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            out: None,
            format: Format::Json,
            replay_dir: None,
        }
    }

    /// Load a config file, or the `config` field of a report file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))?;
        let value = match value.get("config") {
            Some(inner) if value.get("result").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::parse(path, e))
    }

    /// Optimizer settings with the run seed.
    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig { seed: self.seed, ..self.optimizer.clone() }
    }

    pub fn with_ancilla(mut self, a2: Option<usize>, b2: Option<usize>) -> Result<Self, CliError> {
        match (a2, b2) {
            (None, None) => {}
            (Some(a2), Some(b2)) => self.optimizer.ancilla = Some(AncillaDims { a2, b2 }),
            _ => {
                return Err(CliError::Usage("--ancilla-a2 and --ancilla-b2 must be given together".into()));
            }
        }
        Ok(self)
    }

    pub(crate) fn require<'a>(&self, field: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        field
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{} needs --{flag}", self.command.name())))
    }

    pub(crate) fn require_l(&self) -> Result<usize, CliError> {
        self.l.ok_or_else(|| CliError::Usage(format!("{} needs --L", self.command.name())))
    }
}
