//! Turns an unlabeled corpus of document images into an annotated synthetic
//! dataset: cluster the corpus, sample representative seed images, prompt a
//! vision-language backend for HTML documents with embedded ground truth,
//! render and enhance them (handwriting, stamps, barcodes), verify the ground
//! truth against the rendered text, and track everything in a resumable
//! manifest.

pub mod embedding;
pub mod error;
pub mod font;
pub mod geometry;
pub mod handwriting;
pub mod metrics;
pub mod pipeline;
pub mod rendering;
pub mod rng;
pub mod seed_selection;
pub mod synthesis;
pub mod verification;
pub mod visual_elements;

pub use embedding::{EmbeddingMatrix, EmbeddingRecord, Modality};
pub use error::Error;
pub use geometry::{PageSize, PxBox};
pub use seed_selection::{ClusteringResult, SamplingConfig, SamplingStrategy};
pub use synthesis::{DocStatus, GroundTruth, PromptSpec, SynthesizedDocument, Task};
pub use verification::RejectReason;

pub type Result<T> = std::result::Result<T, Error>;
