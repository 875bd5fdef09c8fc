//! Character-level sequence-to-sequence normalization and
//! lemmatization of Old Literary Finnish, trained and evaluated on
//! token-aligned historical/lemma corpora.
//!
//! The pipeline: load or synthesize a corpus ([`corpus`], [`synth`]),
//! cut sentences into word chunks encoded as character sequences,
//! train a bi-directional LSTM encoder / attentional LSTM decoder
//! ([`model`], [`training`]) on the chunk pairs, decode greedily with
//! per-token alignment repair ([`inference`]), and score word-level
//! accuracy against gold lemmas ([`eval`]).

pub mod corpus;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod training;

pub use error::{OfnError, Result};
