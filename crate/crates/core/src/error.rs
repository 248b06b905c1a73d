use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing manifest: {0}")]
    MissingManifest(PathBuf),

    #[error("malformed manifest {path}: {message}")]
    BadManifest { path: PathBuf, message: String },

    #[error("store {path} failed validation with {count} error(s); first: {first}")]
    InvalidStore {
        path: PathBuf,
        count: usize,
        first: String,
    },

    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("no tokens")]
    NoTokens,

    #[error("no tokens for unit '{0}'")]
    NoTokensForUnit(String),

    #[error("kappa must be at least 1")]
    ZeroKappa,

    #[error("kappa {kappa} exceeds feature dimension {dim}")]
    KappaTooLarge { kappa: usize, dim: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("concept config: {0}")]
    Concept(String),

    #[error("components must partition: base {base} appears in '{first}' and '{second}' of concept '{concept}'")]
    OverlappingComponents {
        concept: String,
        base: u32,
        first: String,
        second: String,
    },

    #[error("unknown concept '{0}'")]
    UnknownConcept(String),

    #[error("quantile q must lie in (0, 1), got {0}")]
    BadQuantile(f64),

    #[error("no records for corpus '{0}'")]
    EmptyCorpus(String),

    #[error("no present slices")]
    NoSlices,

    #[error("turning point undefined: fewer than two present slices")]
    TurnUndefined,

    #[error("change rate undefined: fewer than two present slices")]
    RateUndefined,

    #[error("empty salient mass")]
    EmptySalientMass,

    #[error("empty window {0}")]
    EmptyWindow(String),

    #[error("bad window '{0}': expected YEAR, START-END, preYEAR or postYEAR")]
    BadWindow(String),

    #[error("no drifting bases")]
    NoDriftingBases,

    #[error("both fingerprints are empty")]
    EmptyFingerprints,

    #[error("component label mismatch between compositions")]
    LabelMismatch,

    #[error("concept mismatch: '{0}' vs '{1}'")]
    ConceptMismatch(String, String),

    #[error("at least two layers are required, got {0}")]
    TooFewLayers(usize),

    #[error("unknown format '{0}'")]
    UnknownFormat(String),

    #[error("format {format} is not supported for {kind} output")]
    UnsupportedFormat { format: String, kind: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MissingManifest(_) => "missing_manifest",
            Error::BadManifest { .. } => "bad_manifest",
            Error::InvalidStore { .. } => "invalid_store",
            Error::InvalidVector(_) => "invalid_vector",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::NoTokens | Error::NoTokensForUnit(_) => "no_tokens",
            Error::ZeroKappa | Error::KappaTooLarge { .. } => "bad_kappa",
            Error::EmptyBatch => "empty_batch",
            Error::WeightFormat(_) => "weight_format",
            Error::Concept(_) | Error::OverlappingComponents { .. } => "concept_config",
            Error::UnknownConcept(_) => "unknown_concept",
            Error::BadQuantile(_) => "bad_quantile",
            Error::EmptyCorpus(_) => "empty_corpus",
            Error::NoSlices => "no_slices",
            Error::TurnUndefined => "turn_undefined",
            Error::RateUndefined => "rate_undefined",
            Error::EmptySalientMass => "empty_salient_mass",
            Error::EmptyWindow(_) => "empty_window",
            Error::BadWindow(_) => "bad_window",
            Error::NoDriftingBases => "no_drifting_bases",
            Error::EmptyFingerprints => "empty_fingerprints",
            Error::LabelMismatch => "label_mismatch",
            Error::ConceptMismatch(..) => "concept_mismatch",
            Error::TooFewLayers(_) => "too_few_layers",
            Error::UnknownFormat(_) => "unknown_format",
            Error::UnsupportedFormat { .. } => "unsupported_format",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
