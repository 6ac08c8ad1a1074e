//! Knowledge graph embeddings in degenerate Clifford algebras `Cl_{p,q,r}(R^m)`.
//!
//! Entities and relations are grade-≤1 elements of the algebra. A triple
//! `(h, r, t)` is scored by taking the Clifford product of the head and the
//! relation and projecting it onto the tail, where every grade-2 tail
//! coefficient is fixed to one. The crate covers the algebra itself,
//! scoring with analytic gradients, KvsAll training with Adam, filtered
//! link-prediction evaluation, and searches over the signature `(p, q, r)`.

pub mod algebra;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod search;
pub mod train;

pub use algebra::{CliffordElement, FullMultivector, GeneratorClass, ProductResult, Signature};
pub use data::{DatasetStats, Split, TripleStore, Vocab};
pub use error::{Error, Result};
pub use eval::{evaluate, filtered_rank, DirectionReport, EvalReport};
pub use model::{EmbeddingTable, QueryScoreParts};
pub use search::{Conf, SearchRecord, SearchResult};
pub use train::{train, AdamState, TrainConfig, TrainOutcome};
