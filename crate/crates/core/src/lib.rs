//! Pairwise co-occurrence embedding models trained with full softmax,
//! sampled softmax, binary cross-entropy or the relaxed softmax over
//! negatives from uniform, popularity or Boltzmann distributions, with exact
//! evaluation against synthetic ground truth.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
mod float_serde;
pub mod ingest;
pub mod losses;
pub mod model;
pub mod report;
pub mod sampling;
pub mod synthetic;
pub mod textgen;
pub mod train;
pub mod vocab;

pub use checkpoint::{export_word2vec, load_checkpoint, save_checkpoint, Side};
pub use data::{DatasetSpec, TrainingData};
pub use error::{Error, Result};
pub use eval::{EvalOptions, MetricsReport};
pub use ingest::{PairDataset, Split};
pub use losses::{LossGrad, NegativeSet, Normalization};
pub use model::{init_params, ContextId, Matrix, ModelParams, TargetId};
pub use sampling::{Degeneracy, SamplerKind, SamplerSpec, Temperature};
pub use synthetic::GroundTruth;
pub use train::{train, Method, RunRecord, TrainConfig, Trained};
pub use vocab::Vocab;
