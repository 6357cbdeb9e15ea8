use std::fmt;

use thiserror::Error;

/// Pipeline stage, used to name where a run failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Data,
    Train,
    Explain,
    Unlearn,
    Eval,
    Attack,
    Costs,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Train => "train",
            Stage::Explain => "explain",
            Stage::Unlearn => "unlearn",
            Stage::Eval => "eval",
            Stage::Attack => "attack",
            Stage::Costs => "costs",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: fedunlearn::Error,
    },

    #[error("{stage} stage: {message}")]
    Artifact { stage: Stage, message: String },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 1 config error, 2 data error, 3 runtime error.
    pub fn exit_code(&self) -> i32 {
        use fedunlearn::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::Stage { stage, source } => match source {
                E::Config(_) | E::Plan(_) => 1,
                E::Data(_) | E::Ingest { .. } | E::Partition(_) => 2,
                E::Io(_) if *stage == Stage::Data => 2,
                _ => 3,
            },
            CliError::Artifact { .. } => 3,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            CliError::Config(_) => None,
            CliError::Stage { stage, .. } | CliError::Artifact { stage, .. } => Some(*stage),
        }
    }
}

/// Tags core errors with the stage they came from.
pub trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, CliError>;
}

impl<T> StageContext<T> for fedunlearn::Result<T> {
    fn stage(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}

impl<T> StageContext<T> for std::io::Result<T> {
    fn stage(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage {
            stage,
            source: fedunlearn::Error::Io(e),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::config("x").exit_code(), 1);
        let data = CliError::Stage {
            stage: Stage::Data,
            source: fedunlearn::Error::Ingest {
                offset: 0,
                reason: "empty".into(),
            },
        };
        assert_eq!(data.exit_code(), 2);
        let runtime = CliError::Stage {
            stage: Stage::Train,
            source: fedunlearn::Error::Aggregation("nan".into()),
        };
        assert_eq!(runtime.exit_code(), 3);
        assert_eq!(runtime.stage(), Some(Stage::Train));
        assert!(runtime.to_string().starts_with("train stage failed"));
    }
}
