//! Back-off n-gram language models over word, class or subword units.

mod arpa;
mod kn;
mod mixture;
mod perplexity;
mod wb;

pub use arpa::{export_arpa, import_arpa};
pub use kn::{train_kn, word_unit_names, KnTraining};
pub use mixture::{mixture_em, MixtureModel};
pub use perplexity::{perplexity, OovPolicy, PerplexityReport};
pub use wb::{train_class_ngram, train_wb, ClassNGramModel};

use std::collections::HashMap;

use crate::corpus::{TokenId, BOS, EOS, UNK};
use crate::error::{Error, Result};

/// The unit a model predicts. Perplexities are only comparable between
/// models of the same unit kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Word,
    Class,
    Subword,
}

impl std::fmt::Display for UnitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UnitKind::Word => write!(f, "word"),
            UnitKind::Class => write!(f, "class"),
            UnitKind::Subword => write!(f, "subword"),
        }
    }
}

/// Anything that can score a unit in context. Histories and units are ids
/// in the model's own unit inventory; probabilities are base-10 logs.
pub trait LanguageModel: Send + Sync {
    fn unit_kind(&self) -> UnitKind;
    fn log10_prob(&self, history: &[TokenId], unit: TokenId) -> f64;
    fn unit_id(&self, name: &str) -> Option<TokenId>;
    fn unit_name(&self, unit: TokenId) -> &str;
    fn num_units(&self) -> usize;
    fn bos(&self) -> TokenId;
    fn eos(&self) -> TokenId;
    fn unk(&self) -> TokenId;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Entry {
    pub log10_prob: f64,
    pub log10_bow: f64,
}

/// Back-off model: per k-gram a log10 probability and, below the top
/// order, a log10 back-off weight.
pub struct NGramModel {
    order: usize,
    unit_kind: UnitKind,
    names: Vec<String>,
    index: HashMap<String, TokenId>,
    entries: Vec<HashMap<Box<[TokenId]>, Entry>>,
}

impl NGramModel {
    pub(crate) fn new(
        order: usize,
        unit_kind: UnitKind,
        names: Vec<String>,
        entries: Vec<HashMap<Box<[TokenId]>, Entry>>,
    ) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as TokenId))
            .collect();
        NGramModel {
            order,
            unit_kind,
            names,
            index,
            entries,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_grams(&self, k: usize) -> usize {
        self.entries[k - 1].len()
    }

    pub(crate) fn grams(&self, k: usize) -> impl Iterator<Item = (&[TokenId], &Entry)> + '_ {
        self.entries[k - 1].iter().map(|(g, e)| (g.as_ref(), e))
    }

    /// Back-off lookup with the history truncated to the model order.
    fn backoff_prob(&self, history: &[TokenId], unit: TokenId) -> f64 {
        let start = history.len().saturating_sub(self.order - 1);
        let mut h = &history[start..];
        let mut acc = 0.0;
        loop {
            let mut gram = Vec::with_capacity(h.len() + 1);
            gram.extend_from_slice(h);
            gram.push(unit);
            if let Some(e) = self.entries[gram.len() - 1].get(gram.as_slice()) {
                return acc + e.log10_prob;
            }
            if h.is_empty() {
                // unit absent from the model entirely
                return f64::NEG_INFINITY;
            }
            acc += self.entries[h.len() - 1]
                .get(h)
                .map(|e| e.log10_bow)
                .unwrap_or(0.0);
            h = &h[1..];
        }
    }
}

impl LanguageModel for NGramModel {
    fn unit_kind(&self) -> UnitKind {
        self.unit_kind
    }

    fn log10_prob(&self, history: &[TokenId], unit: TokenId) -> f64 {
        self.backoff_prob(history, unit)
    }

    fn unit_id(&self, name: &str) -> Option<TokenId> {
        self.index.get(name).copied()
    }

    fn unit_name(&self, unit: TokenId) -> &str {
        &self.names[unit as usize]
    }

    fn num_units(&self) -> usize {
        self.names.len()
    }

    fn bos(&self) -> TokenId {
        self.index[BOS]
    }

    fn eos(&self) -> TokenId {
        self.index[EOS]
    }

    fn unk(&self) -> TokenId {
        self.index[UNK]
    }
}

pub(crate) fn require_special_units(names: &[String]) -> Result<()> {
    for special in [BOS, EOS, UNK] {
        if !names.iter().any(|n| n == special) {
            return Err(Error::validation(format!("unit inventory lacks {special}")));
        }
    }
    Ok(())
}
