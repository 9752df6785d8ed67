//! Word clustering for class-based language models.
//!
//! A [`ClassMap`] assigns every vocabulary word to exactly one class and
//! stores the within-class unigram log probability of each word. Word
//! classes occupy ids `[0, num_word_classes)`; `<s>`, `</s>` and `<unk>`
//! each sit in their own reserved singleton class after the word classes.

mod brown;
mod exchange;
mod kmeans;
mod rules;

pub use brown::brown_train;
pub use exchange::{exchange_objective, exchange_train, ExchangeStatistics};
pub use kmeans::{kmeans_cluster, kmeans_run, EmbeddingTable, KMeansRun};
pub use rules::{rules_merge, Rule, RuleSet};

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};

pub type ClassId = u32;

#[derive(Debug, Clone)]
pub struct ClassMap {
    assignment: Vec<ClassId>,
    num_word_classes: usize,
    membership_log10: Vec<f64>,
}

impl ClassMap {
    /// Builds a class map from an assignment over the regular word ids.
    /// Assignments must use class ids below `num_word_classes`; the three
    /// reserved tokens are placed in singleton classes automatically and
    /// membership probabilities are ML unigram estimates within each class,
    /// computed from the vocabulary counts.
    pub fn new(
        vocab: &Vocabulary,
        word_assignment: &[ClassId],
        num_word_classes: usize,
    ) -> Result<Self> {
        if word_assignment.len() != vocab.num_regular() {
            return Err(Error::argument(format!(
                "assignment covers {} words, vocabulary has {}",
                word_assignment.len(),
                vocab.num_regular()
            )));
        }
        if let Some(&c) = word_assignment.iter().find(|&&c| c as usize >= num_word_classes) {
            return Err(Error::argument(format!(
                "class id {c} out of range (num classes {num_word_classes})"
            )));
        }
        let mut assignment = word_assignment.to_vec();
        let base = num_word_classes as ClassId;
        assignment.push(base); // <s>
        assignment.push(base + 1); // </s>
        assignment.push(base + 2); // <unk>
        let membership_log10 = compute_membership(vocab, &assignment, num_word_classes + 3);
        Ok(ClassMap {
            assignment,
            num_word_classes,
            membership_log10,
        })
    }

    /// Word classes only, excluding the three reserved singletons.
    pub fn num_word_classes(&self) -> usize {
        self.num_word_classes
    }

    /// Total class count including the reserved singletons.
    pub fn num_classes(&self) -> usize {
        self.num_word_classes + 3
    }

    pub fn class_of(&self, word: TokenId) -> ClassId {
        self.assignment[word as usize]
    }

    pub fn assignment(&self) -> &[ClassId] {
        &self.assignment
    }

    pub fn membership_log10(&self, word: TokenId) -> f64 {
        self.membership_log10[word as usize]
    }

    pub fn is_reserved_class(&self, class: ClassId) -> bool {
        class as usize >= self.num_word_classes
    }

    /// Members of every class, in word-id order.
    pub fn members(&self) -> Vec<Vec<TokenId>> {
        let mut members = vec![Vec::new(); self.num_classes()];
        for (word, &class) in self.assignment.iter().enumerate() {
            members[class as usize].push(word as TokenId);
        }
        members
    }

    /// Writes `class_id<TAB>word<TAB>log10 P(w|class)` lines, sorted by
    /// class id and word.
    pub fn save(&self, vocab: &Vocabulary, path: &Path) -> Result<()> {
        let mut rows: Vec<(ClassId, &str, f64)> = self
            .assignment
            .iter()
            .enumerate()
            .map(|(w, &c)| (c, vocab.token(w as TokenId), self.membership_log10[w]))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let mut out = String::new();
        for (class, word, logp) in rows {
            out.push_str(&format!("{class}\t{word}\t{logp:.6}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a class map written by [`ClassMap::save`]. Words in the file
    /// that are missing from the vocabulary, or vocabulary words missing
    /// from the file, are validation errors listing the offenders.
    pub fn load(vocab: &Vocabulary, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut by_word: HashMap<TokenId, ClassId> = HashMap::new();
        let mut offenders = Vec::new();
        let mut file_classes: HashMap<ClassId, Vec<TokenId>> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let class: ClassId = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(lineno + 1, "expected class_id<TAB>word"))?;
            let word = parts
                .next()
                .ok_or_else(|| Error::parse(lineno + 1, "expected class_id<TAB>word"))?;
            match vocab.id(word) {
                Some(id) => {
                    by_word.insert(id, class);
                    file_classes.entry(class).or_default().push(id);
                }
                None => offenders.push(word.to_string()),
            }
        }
        if !offenders.is_empty() {
            return Err(Error::validation(format!(
                "words not in vocabulary: {}",
                offenders.join(" ")
            )));
        }
        // Renumber word classes densely in file order, dropping classes
        // that held only reserved tokens.
        let mut dense: HashMap<ClassId, ClassId> = HashMap::new();
        let mut word_assignment = vec![0 as ClassId; vocab.num_regular()];
        let mut missing = Vec::new();
        for word in 0..vocab.num_regular() {
            let id = word as TokenId;
            match by_word.get(&id) {
                Some(&c) => {
                    let next = dense.len() as ClassId;
                    let c = *dense.entry(c).or_insert(next);
                    word_assignment[word] = c;
                }
                None => missing.push(vocab.token(id).to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::validation(format!(
                "vocabulary words missing from class file: {}",
                missing.join(" ")
            )));
        }
        ClassMap::new(vocab, &word_assignment, dense.len().max(1))
    }
}

fn compute_membership(vocab: &Vocabulary, assignment: &[ClassId], num_classes: usize) -> Vec<f64> {
    let mut class_total = vec![0u64; num_classes];
    let mut class_size = vec![0usize; num_classes];
    for (word, &class) in assignment.iter().enumerate() {
        class_total[class as usize] += vocab.count(word as TokenId);
        class_size[class as usize] += 1;
    }
    assignment
        .iter()
        .enumerate()
        .map(|(word, &class)| {
            let c = class as usize;
            if class_size[c] == 1 {
                0.0
            } else if class_total[c] == 0 {
                // all-zero-count class: uniform membership
                -(class_size[c] as f64).log10()
            } else {
                let count = vocab.count(word as TokenId);
                if count == 0 {
                    f64::NEG_INFINITY
                } else {
                    (count as f64 / class_total[c] as f64).log10()
                }
            }
        })
        .collect()
}

/// Initialization strategies for [`init_classes`].
pub enum InitStrategy<'a> {
    /// Sort words by frequency and assign the i-th most frequent word to
    /// class `i mod num_classes`.
    FrequencyMod,
    /// Copy assignments from a class map file.
    FromFile(&'a Path),
    /// Copy assignments from an existing class map (for example a Brown or
    /// rules run used to initialize exchange training).
    FromClassMap(&'a ClassMap),
}

/// Produces an initial class map with `num_classes` word classes.
///
/// When the source of a copied clustering has more word classes than
/// requested, class `i` folds onto `i mod num_classes`; a source with fewer
/// classes is kept as-is, leaving the upper classes empty.
pub fn init_classes(
    vocab: &Vocabulary,
    num_classes: usize,
    strategy: InitStrategy,
) -> Result<ClassMap> {
    if num_classes < 2 {
        return Err(Error::argument("num_classes must be >= 2"));
    }
    if num_classes > vocab.num_regular() {
        return Err(Error::argument(format!(
            "num_classes {num_classes} exceeds vocabulary size {}",
            vocab.num_regular()
        )));
    }
    match strategy {
        InitStrategy::FrequencyMod => {
            // Vocabulary ids are already frequency-sorted.
            let assignment: Vec<ClassId> = (0..vocab.num_regular())
                .map(|i| (i % num_classes) as ClassId)
                .collect();
            ClassMap::new(vocab, &assignment, num_classes)
        }
        InitStrategy::FromFile(path) => {
            let source = ClassMap::load(vocab, path)?;
            fold_classes(vocab, &source, num_classes)
        }
        InitStrategy::FromClassMap(source) => fold_classes(vocab, source, num_classes),
    }
}

fn fold_classes(vocab: &Vocabulary, source: &ClassMap, num_classes: usize) -> Result<ClassMap> {
    let assignment: Vec<ClassId> = (0..vocab.num_regular())
        .map(|w| source.class_of(w as TokenId) % num_classes as ClassId)
        .collect();
    ClassMap::new(vocab, &assignment, num_classes)
}
