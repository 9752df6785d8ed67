//! Witten-Bell smoothing and the factored class n-gram model.
//!
//! Class sequence statistics are too peaked for Kneser-Ney discount
//! estimation, so the class stream uses Witten-Bell:
//! `P(w|h) = (c(h,w) + T(h) P(w|h')) / (c(h) + T(h))` with `T(h)` the
//! number of distinct continuations of `h`, recursing to a uniform base
//! over the predictable universe.

use std::collections::HashMap;

use crate::cluster::ClassMap;
use crate::corpus::{CountTable, TokenId, Vocabulary, BOS, EOS, UNK};
use crate::error::{Error, Result};
use crate::ngram::{require_special_units, Entry, LanguageModel, NGramModel, UnitKind};

/// Trains a Witten-Bell back-off model. `universe` lists the predictable
/// unit ids (everything that may follow a history); units outside it get
/// no probability mass.
pub fn train_wb(
    counts: &CountTable,
    order: usize,
    unit_kind: UnitKind,
    names: Vec<String>,
    universe: &[TokenId],
) -> Result<NGramModel> {
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
    let v = universe.len() as f64;
    if universe.is_empty() {
        return Err(Error::argument("empty unit universe"));
    }

    let mut entries: Vec<HashMap<Box<[TokenId]>, Entry>> = vec![HashMap::new(); order];

    // unigram level: interpolate observed counts with the uniform base
    let mut total = 0u64;
    let mut observed: HashMap<TokenId, u64> = HashMap::new();
    for (gram, count) in counts.grams(1) {
        if gram[0] == bos {
            continue;
        }
        observed.insert(gram[0], count);
        total += count;
    }
    let types = observed.len() as f64;
    for &u in universe {
        let c = observed.get(&u).copied().unwrap_or(0);
        let p = (c as f64 + types / v) / (total as f64 + types);
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

    for k in 2..=order {
        let mut by_history: HashMap<&[TokenId], Vec<(TokenId, u64)>> = HashMap::new();
        for (gram, count) in counts.grams(k) {
            by_history
                .entry(&gram[..k - 1])
                .or_default()
                .push((gram[k - 1], count));
        }
        let mut new_entries: Vec<(Box<[TokenId]>, Entry)> = Vec::new();
        let mut bows: Vec<(Box<[TokenId]>, f64)> = Vec::new();
        for (history, conts) in &by_history {
            // closure: only histories present one level down can back off
            if entries[k - 2].get(*history).is_none() {
                continue;
            }
            let denom: u64 = conts.iter().map(|(_, c)| c).sum();
            let t = conts.len() as f64;
            for &(unit, c) in conts {
                let lower = lower_prob(&entries[..k - 1], &history[1..], unit);
                let p = (c as f64 + t * lower) / (denom as f64 + t);
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
            bows.push(((*history).into(), (t / (denom as f64 + t)).log10()));
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

    Ok(NGramModel::new(order, unit_kind, names, entries))
}

fn lower_prob(entries: &[HashMap<Box<[TokenId]>, Entry>], history: &[TokenId], unit: TokenId) -> f64 {
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

/// Class sequence model plus class membership: queries factor exactly as
/// `P(w|h) = P(c(w)|c(h)) * P(w|c(w))`.
pub struct ClassNGramModel {
    class_model: NGramModel,
    names: Vec<String>,
    index: HashMap<String, TokenId>,
    assignment: Vec<u32>,
    membership_log10: Vec<f64>,
    bos: TokenId,
    eos: TokenId,
    unk: TokenId,
}

impl ClassNGramModel {
    pub fn class_model(&self) -> &NGramModel {
        &self.class_model
    }

    pub fn class_of(&self, word: TokenId) -> u32 {
        self.assignment[word as usize]
    }

    pub fn membership_log10(&self, word: TokenId) -> f64 {
        self.membership_log10[word as usize]
    }
}

/// Synthetic unit names for class ids: `C<id>` for word classes, the
/// reserved token strings for the reserved singleton classes.
pub fn class_unit_names(classmap: &ClassMap) -> Vec<String> {
    let nc = classmap.num_word_classes();
    (0..classmap.num_classes())
        .map(|c| match c.checked_sub(nc) {
            Some(0) => BOS.to_string(),
            Some(1) => EOS.to_string(),
            Some(2) => UNK.to_string(),
            _ => format!("C{c}"),
        })
        .collect()
}

/// Trains the class sequence model from word n-gram counts projected
/// through the class map, with Witten-Bell smoothing.
pub fn train_class_ngram(
    counts: &CountTable,
    vocab: &Vocabulary,
    classmap: &ClassMap,
    order: usize,
) -> Result<ClassNGramModel> {
    if classmap.assignment().len() != vocab.len() {
        return Err(Error::validation(format!(
            "class map covers {} ids, vocabulary has {}",
            classmap.assignment().len(),
            vocab.len()
        )));
    }
    // project word grams onto class grams
    let mut projected: Vec<HashMap<Box<[TokenId]>, u64>> = vec![HashMap::new(); order];
    for k in 1..=order {
        for (gram, count) in counts.grams(k) {
            let class_gram: Vec<TokenId> = gram.iter().map(|&w| classmap.class_of(w)).collect();
            *projected[k - 1].entry(class_gram.into()).or_insert(0) += count;
        }
    }
    let class_counts = CountTable::from_counts(projected, counts.num_sentences())?;

    // predictable universe: non-empty classes, never the <s> class
    let members = classmap.members();
    let bos_class = classmap.class_of(vocab.bos());
    let universe: Vec<TokenId> = (0..classmap.num_classes() as TokenId)
        .filter(|&c| c != bos_class && !members[c as usize].is_empty())
        .collect();
    let class_model = train_wb(
        &class_counts,
        order,
        UnitKind::Class,
        class_unit_names(classmap),
        &universe,
    )?;

    let names: Vec<String> = vocab.ids().map(|id| vocab.token(id).to_string()).collect();
    let index = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i as TokenId))
        .collect();
    let membership_log10 = vocab
        .ids()
        .map(|id| classmap.membership_log10(id))
        .collect();
    Ok(ClassNGramModel {
        class_model,
        names,
        index,
        assignment: classmap.assignment().to_vec(),
        membership_log10,
        bos: vocab.bos(),
        eos: vocab.eos(),
        unk: vocab.unk(),
    })
}

impl LanguageModel for ClassNGramModel {
    fn unit_kind(&self) -> UnitKind {
        UnitKind::Word
    }

    fn log10_prob(&self, history: &[TokenId], unit: TokenId) -> f64 {
        let class_history: Vec<TokenId> = history
            .iter()
            .map(|&w| self.assignment[w as usize])
            .collect();
        let class = self.assignment[unit as usize];
        self.class_model.log10_prob(&class_history, class) + self.membership_log10[unit as usize]
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
        self.bos
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn unk(&self) -> TokenId {
        self.unk
    }
}
