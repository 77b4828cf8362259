use std::fmt;

use serde::Serialize;

/// Failure class; decides the process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Runtime,
    Incomplete,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Runtime => 2,
            ErrorKind::Incomplete => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub stage: &'static str,
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub source: anyhow::Error,
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: ErrorKind,
    exit_code: i32,
    stage: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, stage: &'static str, source: impl Into<anyhow::Error>) -> Self {
        CliError { kind, stage, scenario: None, seed: None, source: source.into() }
    }

    pub fn config(source: impl Into<anyhow::Error>) -> Self {
        Self::new(ErrorKind::Config, "config", source)
    }

    pub fn runtime(stage: &'static str, source: impl Into<anyhow::Error>) -> Self {
        Self::new(ErrorKind::Runtime, stage, source)
    }

    pub fn at(mut self, scenario: &str, seed: u64) -> Self {
        self.scenario = Some(scenario.to_string());
        self.seed = Some(seed);
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Single-line JSON record for stderr.
    pub fn to_json(&self) -> String {
        let rec = ErrorRecord {
            error: self.kind,
            exit_code: self.exit_code(),
            stage: self.stage,
            scenario: self.scenario.as_deref(),
            seed: self.seed,
            message: format!("{:#}", self.source),
        };
        serde_json::to_string(&rec).expect("error record serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} error during {}: {:#}", self.kind, self.stage, self.source)
    }
}

impl std::error::Error for CliError {}
