//! Brown-style greedy class merging, working-set variant.
//!
//! The most frequent `num_classes` words seed singleton classes. The
//! remaining words are introduced in frequency order, each merged into the
//! seeded class whose choice loses the least class bigram likelihood.
//! After `N_V - num_classes` merges every word is in one of the
//! `num_classes` classes.

use crate::cluster::exchange::ExchangeStatistics;
use crate::cluster::{ClassId, ClassMap};
use crate::corpus::{CountTable, TokenId, Vocabulary};
use crate::error::{Error, Result};

pub fn brown_train(
    counts: &CountTable,
    vocab: &Vocabulary,
    num_classes: usize,
) -> Result<ClassMap> {
    if num_classes < 2 {
        return Err(Error::argument("num_classes must be >= 2"));
    }
    let num_words = vocab.num_regular();
    if num_classes > num_words {
        return Err(Error::argument(format!(
            "num_classes {num_classes} exceeds vocabulary size {num_words}"
        )));
    }
    // Working assignment: seeds in classes [0, num_classes); every later
    // word starts in its own temporary singleton above them, then merges
    // down. Reserved tokens go behind the temporaries. Vocabulary ids are
    // frequency-sorted, so word id order is introduction order.
    let total_classes = num_words + 3;
    let assignment: Vec<ClassId> = (0..total_classes as ClassId).collect();
    let mut stats = ExchangeStatistics::from_assignment(counts, &assignment, total_classes)?;
    for word in num_classes..num_words {
        let word = word as TokenId;
        let adj = stats.word_class_adjacency(word);
        let mut best: Option<(f64, ClassId)> = None;
        for to in 0..num_classes as ClassId {
            if let Some(delta) = stats.move_delta(word, to, &adj) {
                // least loss wins; ties to the lowest class index
                if best.map_or(true, |(bd, _)| delta > bd) {
                    best = Some((delta, to));
                }
            }
        }
        let (_, to) = best.expect("at least one candidate class");
        stats.apply_move(word, to);
    }
    let word_assignment: Vec<ClassId> = (0..num_words)
        .map(|w| stats.class_of(w as TokenId))
        .collect();
    ClassMap::new(vocab, &word_assignment, num_classes)
}
