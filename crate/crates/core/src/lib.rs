//! Decoupled momentum (DeMo) optimization.
//!
//! Momentum is accumulated locally on each worker; each step only the
//! highest-energy DCT components of every chunk are extracted, shared with an
//! all-gather, and applied. The slow residual stays local.

pub mod compaction;
pub mod config;
pub mod dct;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod tensor;
pub mod transport;

pub use compaction::{extract_fast_components, merge_and_reconstruct, CompressedComponents, MergeRule};
pub use dct::{build_basis, dct_forward_chunk, dct_inverse_chunk, BasisCache, DctBasis};
pub use config::{ConfigError, RunConfig};
pub use error::TensorError;
pub use harness::{run_experiment, HarnessError, RunMetrics};
pub use optimizer::{BaselineKind, BaselineOptimizer, DemoConfig, DemoOptimizer, DemoParamState};
pub use tensor::{chunk, clamp_chunk_shape, unchunk, ChunkGeometry, ChunkedView, DType, Element, Tensor};
pub use transport::{Collective, CommLedger, SyncPayload, TransportError};
