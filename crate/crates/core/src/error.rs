use thiserror::Error;

/// Errors produced by the calibration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),

    #[error("delta distributions have no density")]
    DeltaHasNoDensity,

    #[error("no beta distribution matches mean {mean} and variance {variance}")]
    MomentInfeasible { mean: f64, variance: f64 },

    #[error("kernel parameters need a beta with alpha, beta >= 1 and alpha + beta > 2")]
    UndefinedKernel,

    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("unknown phrase {0:?}")]
    UnknownPhrase(String),

    #[error("invalid bin grid: {0}")]
    InvalidGrid(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("record {index}: phrase index {phrase} out of range for lexicon of size {size}")]
    PhraseOutOfRange {
        index: usize,
        phrase: usize,
        size: usize,
    },

    #[error("records mix hard and uncertain labels but no label lexicon was supplied")]
    MixedLabelModes,

    #[error("records carry uncertain labels but no label lexicon was supplied")]
    MissingLabelLexicon,

    #[error("ECE* needs at least 3 bins, grid has {0}")]
    GridTooCoarse(usize),

    #[error("continuous curve needs beta predictions; phrase {0:?} is a delta")]
    DeltaInContinuousPath(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical overflow in transport solver: {0}")]
    NumericalOverflow(String),

    #[error("source phrase {0:?} is used but received no transported mass")]
    EmptyRow(String),

    #[error("record {index} uses phrase {phrase} which the policy does not cover")]
    UncoveredPhrase { index: usize, phrase: usize },

    #[error("unsupported export format {0:?}")]
    UnsupportedFormat(String),

    #[error("{path}: {message}")]
    Load { path: String, message: String },

    #[error("{0}")]
    Rows(RowErrors),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Per-row diagnostics collected while loading a tabular file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RowErrors {
    pub entries: Vec<(usize, String)>,
}

impl RowErrors {
    pub fn push(&mut self, line: usize, message: impl Into<String>) {
        self.entries.push((line, message.into()));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl std::fmt::Display for RowErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} invalid row(s)", self.entries.len())?;
        for (line, msg) in &self.entries {
            write!(f, "\n  line {line}: {msg}")?;
        }
        Ok(())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
