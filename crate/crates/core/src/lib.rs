//! Diachronic concept analytics over sparse autoencoder (SAE) activations.
//!
//! The crate turns timestamped corpora of sentence-level sparse activations
//! into drift-ranked features, concept/corpus atlases, composition shares,
//! cross-corpus overlap decompositions, cross-layer robustness tables and
//! evidence bundles for close reading.
//!
//! Layout:
//! - [`sparse`] and [`store`]: sparse vectors, the on-disk store format, validation
//!   and token pooling.
//! - [`sae`]: frozen TopK SAE forward pass and evaluation losses.
//! - [`concepts`]: operational concept definitions (component base sets, lexemes).
//! - [`diachronic`]: slice means, drift, salient sets, shares, entropy, peaks and turns.
//! - [`comparative`]: Jaccard@K overlap and 2-gram evidence fingerprints.
//! - [`evidence`]: deterministic retrieval of highest-activating contexts.
//! - [`analysis`]: multi-step pipelines (atlas, cross-corpus, cross-layer).
//! - [`report`]: CSV / JSON / SVG / Markdown rendering.
//!
//! Data-parallel loops go through [`Exec`]; with the default `parallel` feature
//! they run on rayon, otherwise sequentially. Both paths reduce in the same
//! canonical order and give bit-identical results.

pub mod analysis;
pub mod comparative;
pub mod concepts;
pub mod diachronic;
pub mod error;
pub mod evidence;
mod exec;
pub mod report;
pub mod sae;
pub mod sparse;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
pub use sparse::SparseVector;
