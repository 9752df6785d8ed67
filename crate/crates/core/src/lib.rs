//! Language modeling for very large vocabularies: word clustering,
//! back-off and class n-gram models, unsupervised subword segmentation,
//! recurrent neural network language models with approximate-softmax
//! training, and lattice rescoring.

pub mod cluster;
pub mod corpus;
mod error;
pub mod lattice;
pub mod ngram;
pub mod nnlm;
pub mod subword;

pub use cluster::{ClassId, ClassMap};
pub use corpus::{CountTable, RawCorpus, TokenId, TokenizedCorpus, Vocabulary};
pub use error::{Error, Result};
pub use ngram::{LanguageModel, NGramModel, UnitKind};
pub use subword::{MarkedMorph, MorphLexicon};
