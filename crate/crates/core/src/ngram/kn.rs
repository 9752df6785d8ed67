//! Interpolated modified Kneser-Ney estimation.
//!
//! The top order uses raw counts; lower orders use continuation counts
//! (number of distinct predecessors among kept higher-order grams), except
//! that `<s>`-initial grams keep their raw counts since nothing can
//! precede them. Each order carries three discounts estimated from its
//! count-of-counts:
//!
//! ```text
//! Y  = n1 / (n1 + 2 n2)
//! D1 = 1 - 2 Y n2 / n1,  D2 = 2 - 3 Y n3 / n2,  D3+ = 3 - 4 Y n4 / n3
//! ```
//!
//! When any of n1..n4 is zero the order falls back to a flat absolute
//! discount of 0.5 with a warning. Probabilities interpolate with the
//! lower order, so every history's distribution sums to one exactly and
//! unseen units keep positive probability down to the uniform base
//! `1/V` at the unigram level.

use std::collections::HashMap;

use crate::corpus::{CountTable, TokenId, BOS};
use crate::error::{Error, Result};
use crate::ngram::{require_special_units, Entry, NGramModel, UnitKind};

pub struct KnTraining {
    pub model: NGramModel,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy)]
struct Discounts {
    d1: f64,
    d2: f64,
    d3: f64,
}

impl Discounts {
    fn for_count(&self, c: u64) -> f64 {
        match c {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3,
        }
    }
}

fn estimate_discounts(counts: impl Iterator<Item = u64>, order: usize) -> (Discounts, Option<String>) {
    let mut n = [0u64; 4];
    for c in counts {
        if (1..=4).contains(&c) {
            n[(c - 1) as usize] += 1;
        }
    }
    if n.iter().all(|&x| x > 0) {
        let (n1, n2, n3, n4) = (n[0] as f64, n[1] as f64, n[2] as f64, n[3] as f64);
        let y = n1 / (n1 + 2.0 * n2);
        let d = Discounts {
            d1: (1.0 - 2.0 * y * n2 / n1).clamp(0.0, 1.0),
            d2: (2.0 - 3.0 * y * n3 / n2).clamp(0.0, 2.0),
            d3: (3.0 - 4.0 * y * n4 / n3).clamp(0.0, 3.0),
        };
        (d, None)
    } else {
        (
            Discounts {
                d1: 0.5,
                d2: 0.5,
                d3: 0.5,
            },
            Some(format!(
                "order {order}: degenerate count-of-counts {n:?}, falling back to absolute discount 0.5"
            )),
        )
    }
}

/// Looks up an interpolated lower-order probability in the partially built
/// entry stack (linear space).
fn partial_prob(entries: &[HashMap<Box<[TokenId]>, Entry>], history: &[TokenId], unit: TokenId) -> f64 {
    let mut h = history;
    let mut bow_acc = 0.0f64;
    loop {
        let mut gram = Vec::with_capacity(h.len() + 1);
        gram.extend_from_slice(h);
        gram.push(unit);
        if let Some(e) = entries[gram.len() - 1].get(gram.as_slice()) {
            return 10f64.powf(bow_acc + e.log10_prob);
        }
        if h.is_empty() {
            return 0.0;
        }
        bow_acc += entries[h.len() - 1]
            .get(h)
            .map(|e| e.log10_bow)
            .unwrap_or(0.0);
        h = &h[1..];
    }
}

/// Trains an interpolated modified Kneser-Ney model.
///
/// `cutoffs[k-2]` is the minimum raw count for a k-gram (k >= 2) to enter
/// the model; prefix closure is enforced so pruning never strands a
/// higher-order gram without its history. `names` is the full unit
/// inventory (`unit id -> string`), which must contain the reserved
/// tokens; everything except `<s>` is a predictable unit.
pub fn train_kn(
    counts: &CountTable,
    order: usize,
    cutoffs: &[u64],
    unit_kind: UnitKind,
    names: Vec<String>,
) -> Result<KnTraining> {
    if order < 1 {
        return Err(Error::argument("order must be >= 1"));
    }
    if counts.order() < order {
        return Err(Error::argument(format!(
            "count table has order {}, requested {order}",
            counts.order()
        )));
    }
    require_special_units(&names)?;
    let bos = names.iter().position(|n| n == BOS).unwrap() as TokenId;
    let num_units = names.len();
    let mut warnings = Vec::new();

    // kept[k-1]: raw counts surviving the cutoffs, closed under prefixes
    let mut kept: Vec<HashMap<Box<[TokenId]>, u64>> = Vec::with_capacity(order);
    for k in 1..=order {
        let cutoff = if k >= 2 {
            cutoffs.get(k - 2).copied().unwrap_or(1).max(1)
        } else {
            1
        };
        let mut level: HashMap<Box<[TokenId]>, u64> = HashMap::new();
        for (gram, count) in counts.grams(k) {
            if count < cutoff {
                continue;
            }
            if k > 1 && !kept[k - 2].contains_key(&gram[..k - 1]) {
                continue;
            }
            level.insert(gram.into(), count);
        }
        kept.push(level);
    }

    // adjusted[k-1]: continuation counts below the top order
    let mut adjusted: Vec<HashMap<Box<[TokenId]>, u64>> = vec![HashMap::new(); order];
    adjusted[order - 1] = kept[order - 1].clone();
    for k in (1..order).rev() {
        let mut cont: HashMap<Box<[TokenId]>, u64> = HashMap::new();
        for gram in kept[k].keys() {
            *cont.entry(gram[1..].into()).or_insert(0) += 1;
        }
        let mut level = HashMap::new();
        for gram in kept[k - 1].keys() {
            let c = if gram[0] == bos {
                kept[k - 1][gram]
            } else {
                cont.get(gram).copied().unwrap_or(0)
            };
            level.insert(gram.clone(), c);
        }
        adjusted[k - 1] = level;
    }

    let mut entries: Vec<HashMap<Box<[TokenId]>, Entry>> = vec![HashMap::new(); order];

    // unigram level: interpolate with the uniform distribution over the
    // predictable universe
    let universe: Vec<TokenId> = (0..num_units as TokenId).filter(|&u| u != bos).collect();
    let v = universe.len() as f64;
    let uni_counts: Vec<u64> = universe
        .iter()
        .map(|&u| adjusted[0].get([u].as_slice()).copied().unwrap_or(0))
        .collect();
    let (disc, warn) = estimate_discounts(uni_counts.iter().copied(), 1);
    if let Some(w) = warn {
        warnings.push(w);
    }
    let total: u64 = uni_counts.iter().sum();
    if total == 0 {
        return Err(Error::validation("no unigram events to train on"));
    }
    let mut gamma_num = 0.0;
    for &c in &uni_counts {
        gamma_num += disc.for_count(c);
    }
    let gamma = gamma_num / total as f64;
    for (&u, &c) in universe.iter().zip(&uni_counts) {
        let p = (c as f64 - disc.for_count(c)).max(0.0) / total as f64 + gamma / v;
        entries[0].insert(
            vec![u].into_boxed_slice(),
            Entry {
                log10_prob: p.log10(),
                log10_bow: 0.0,
            },
        );
    }
    entries[0].insert(
        vec![bos].into_boxed_slice(),
        Entry {
            log10_prob: -99.0,
            log10_bow: 0.0,
        },
    );

    // higher orders, bottom-up
    for k in 2..=order {
        let (disc, warn) = estimate_discounts(
            adjusted[k - 1]
                .iter()
                .filter(|(g, _)| !(k == 1 && g[0] == bos))
                .map(|(_, &c)| c),
            k,
        );
        if let Some(w) = warn {
            warnings.push(w);
        }
        // group continuations by history
        let mut by_history: HashMap<&[TokenId], Vec<(TokenId, u64)>> = HashMap::new();
        for (gram, &c) in &adjusted[k - 1] {
            by_history
                .entry(&gram[..k - 1])
                .or_default()
                .push((gram[k - 1], c));
        }
        let mut new_entries: Vec<(Box<[TokenId]>, Entry)> = Vec::new();
        let mut bows: Vec<(Box<[TokenId]>, f64)> = Vec::new();
        for (history, conts) in &by_history {
            let denom: u64 = conts.iter().map(|(_, c)| c).sum();
            let gamma = if denom == 0 {
                1.0
            } else {
                let num: f64 = conts.iter().map(|(_, c)| disc.for_count(*c)).sum();
                num / denom as f64
            };
            for &(unit, c) in conts {
                let lower = partial_prob(&entries[..k - 1], &history[1..], unit);
                let main = if denom == 0 {
                    0.0
                } else {
                    (c as f64 - disc.for_count(c)).max(0.0) / denom as f64
                };
                let p = main + gamma * lower;
                let mut g = history.to_vec();
                g.push(unit);
                new_entries.push((
                    g.into_boxed_slice(),
                    Entry {
                        log10_prob: p.log10(),
                        log10_bow: 0.0,
                    },
                ));
            }
            bows.push(((*history).into(), gamma.log10()));
        }
        for (gram, entry) in new_entries {
            entries[k - 1].insert(gram, entry);
        }
        for (history, log10_bow) in bows {
            if let Some(e) = entries[k - 2].get_mut(&history) {
                e.log10_bow = log10_bow;
            }
        }
    }

    Ok(KnTraining {
        model: NGramModel::new(order, unit_kind, names, entries),
        warnings,
    })
}

/// Unit inventory for a word model: every vocabulary token.
pub fn word_unit_names(vocab: &crate::corpus::Vocabulary) -> Vec<String> {
    vocab.ids().map(|id| vocab.token(id).to_string()).collect()
}
