//! Perplexity evaluation: `10^(-(1/N) * sum log10 P)` over scored events
//! including `</s>`, with OOV tokens either excluded from `N` or scored as
//! `<unk>`.

use crate::error::{Error, Result};
use crate::ngram::{LanguageModel, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OovPolicy {
    Exclude,
    AsUnk,
}

#[derive(Debug, Clone)]
pub struct PerplexityReport {
    pub unit_kind: UnitKind,
    pub scored_events: usize,
    pub excluded: usize,
    pub log10_total: f64,
    pub perplexity: f64,
}

impl PerplexityReport {
    /// The `unit_kind N logprob ppl` line of the evaluation interface.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{:.4}\t{:.4}",
            self.unit_kind, self.scored_events, self.log10_total, self.perplexity
        )
    }
}

/// Evaluates a model on raw sentences (token strings). Excluded OOVs stay
/// in the history as `<unk>` so the context length is preserved.
pub fn perplexity(
    model: &dyn LanguageModel,
    sentences: &[Vec<String>],
    policy: OovPolicy,
) -> Result<PerplexityReport> {
    let mut log10_total = 0.0f64;
    let mut scored = 0usize;
    let mut excluded = 0usize;
    for sentence in sentences {
        let mut history = vec![model.bos()];
        for token in sentence {
            match model.unit_id(token) {
                Some(id) => {
                    log10_total += model.log10_prob(&history, id);
                    scored += 1;
                    history.push(id);
                }
                None => {
                    match policy {
                        OovPolicy::Exclude => excluded += 1,
                        OovPolicy::AsUnk => {
                            log10_total += model.log10_prob(&history, model.unk());
                            scored += 1;
                        }
                    }
                    history.push(model.unk());
                }
            }
        }
        log10_total += model.log10_prob(&history, model.eos());
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::validation("no events to score: perplexity undefined"));
    }
    let perplexity = 10f64.powf(-log10_total / scored as f64);
    Ok(PerplexityReport {
        unit_kind: model.unit_kind(),
        scored_events: scored,
        excluded,
        log10_total,
        perplexity,
    })
}
