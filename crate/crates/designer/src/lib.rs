//! Pretraining example design from sentence embeddings.
//!
//! Sentences are ingested with precomputed token ids and embedding vectors,
//! matched to their cosine nearest neighbors, and packed into training
//! examples under one of five arrangements. [`mix_batches`] interleaves the
//! designed examples with regular ones half and half.

pub mod batch;
pub mod error;
pub mod export;
pub mod fixture;
pub mod knn;
pub mod pack;
pub mod sentence;

pub use batch::{mix_batches, Batch, MixedBatches};
pub use error::{DesignError, Result};
pub use export::{export_dataset, read_dataset, ExportRecord};
pub use knn::{knn_search, KnnParams, Neighbor, NeighborList, NswIndex};
pub use pack::{build_dataset, pack_example, Arrangement, DatasetParams, SearchIndex, TrainingExample};
pub use sentence::{ingest_embeddings, write_binary, EmbeddedSentence, InputFormat, Source, WhitespaceTokenizer};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const DEFAULT_BUDGET: usize = 256;
