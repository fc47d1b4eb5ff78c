//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("doc_id sets differ between modalities: {0}")]
    MismatchedDocIds(String),

    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },

    #[error("no clusters found (all points noise)")]
    NoClusters,

    #[error("clustering backend: {0}")]
    ClusterBackend(String),

    #[error("unknown modality {0:?}")]
    UnknownModality(String),

    #[error("prompt template: {0}")]
    PromptTemplate(String),

    #[error("cluster {index} has {size} members, need {need} for in-cluster sampling without replacement")]
    ClusterTooSmall { index: usize, size: usize, need: usize },

    #[error("backend call failed after {retries} retries: {message}")]
    BackendExhausted { retries: u32, message: String },

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("no parseable documents in response")]
    EmptyResponse,

    #[error("no ground-truth payload in document")]
    NoGt,

    #[error("malformed ground truth: {0}")]
    MalformedGt(String),

    #[error("render backend unavailable: {0}")]
    RenderUnavailable(String),

    #[error("render failed: {0}")]
    RenderFailed(String),

    #[error("ocr failed: {0}")]
    OcrFailed(String),

    #[error("ink image is empty (no pixel above threshold)")]
    EmptyInk,

    #[error("unknown writer id {0}")]
    UnknownWriter(u32),

    #[error("unsupported visual element type {0:?}")]
    UnsupportedElementType(String),

    #[error("asset bank {0:?} is empty or missing")]
    EmptyAssetBank(String),

    #[error("barcode payload {0:?} is not encodable")]
    BadBarcodePayload(String),

    #[error("covariance is not positive semi-definite (eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("dataset definition: {0}")]
    Definition(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("run paused after {consecutive} consecutive backend failures; manifest checkpoint is resumable")]
    RunPaused { consecutive: u32 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("yaml: {0}")]
    Yaml(#[from] serde_yaml::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("{0}")]
    Other(String),
}
