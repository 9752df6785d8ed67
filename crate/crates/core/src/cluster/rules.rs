//! Rule-based merging of standard and colloquial word forms.
//!
//! A rule rewrites `pattern` to `replacement`; `^`/`$` anchor the pattern
//! to the word start/end. A colloquial word is merged into a standard
//! word's class when it is reachable from the standard form by one or more
//! rule applications. Every word lands in at most one class; standard
//! words are visited in frequency order, so the more frequent standard
//! form wins contested colloquial variants.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use crate::cluster::{ClassId, ClassMap};
use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Rule {
    pattern: String,
    replacement: String,
    anchor_start: bool,
    anchor_end: bool,
}

impl Rule {
    pub fn parse(text: &str, index: usize) -> Result<Self> {
        let (pattern, replacement) = text
            .split_once('\t')
            .ok_or_else(|| Error::parse(index + 1, "rule must be pattern<TAB>replacement"))?;
        let mut pattern = pattern.to_string();
        let anchor_start = pattern.starts_with('^');
        if anchor_start {
            pattern.remove(0);
        }
        let anchor_end = pattern.ends_with('$');
        if anchor_end {
            pattern.pop();
        }
        if pattern.is_empty() {
            return Err(Error::parse(index + 1, "empty rule pattern"));
        }
        Ok(Rule {
            pattern,
            replacement: replacement.to_string(),
            anchor_start,
            anchor_end,
        })
    }

    /// All words obtainable by rewriting one occurrence of the pattern.
    fn apply(&self, word: &str) -> Vec<String> {
        let mut results = Vec::new();
        for (pos, _) in word.match_indices(&self.pattern) {
            if self.anchor_start && pos != 0 {
                continue;
            }
            if self.anchor_end && pos + self.pattern.len() != word.len() {
                continue;
            }
            let mut rewritten = String::with_capacity(word.len());
            rewritten.push_str(&word[..pos]);
            rewritten.push_str(&self.replacement);
            rewritten.push_str(&word[pos + self.pattern.len()..]);
            results.push(rewritten);
        }
        results
    }
}

/// Ordered list of rewrite rules.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (index, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            rules.push(Rule::parse(line, index)?);
        }
        Ok(RuleSet { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RuleSet::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Every form reachable from `word` by at least one rule application.
    /// Derivation depth and breadth are capped to keep pathological rule
    /// sets from exploding.
    pub fn reachable(&self, word: &str) -> HashSet<String> {
        const MAX_VARIANTS: usize = 1000;
        let max_depth = self.rules.len().min(8);
        let mut seen: HashSet<String> = HashSet::new();
        let mut queue: VecDeque<(String, usize)> = VecDeque::new();
        queue.push_back((word.to_string(), 0));
        while let Some((form, depth)) = queue.pop_front() {
            if depth >= max_depth || seen.len() >= MAX_VARIANTS {
                continue;
            }
            for rule in &self.rules {
                for rewritten in rule.apply(&form) {
                    if rewritten != word && seen.insert(rewritten.clone()) {
                        queue.push_back((rewritten, depth + 1));
                    }
                }
            }
        }
        seen
    }
}

/// Merges colloquial variants into their standard words' classes.
///
/// `standard` and `colloquial` list the word ids playing each role (a word
/// may appear in both). Words not merged with anything become singleton
/// classes. The result is a valid initialization for exchange training.
pub fn rules_merge(
    vocab: &Vocabulary,
    standard: &[TokenId],
    colloquial: &[TokenId],
    rules: &RuleSet,
) -> Result<ClassMap> {
    let colloquial_by_form: HashMap<&str, TokenId> = colloquial
        .iter()
        .map(|&id| (vocab.token(id), id))
        .collect();
    let mut class_of: HashMap<TokenId, ClassId> = HashMap::new();
    let mut next_class: ClassId = 0;
    // vocabulary ids are frequency-sorted, so sorted standard ids visit
    // the most frequent standard words first
    let mut standard_sorted = standard.to_vec();
    standard_sorted.sort_unstable();
    for &std_id in &standard_sorted {
        if class_of.contains_key(&std_id) {
            continue; // already claimed as someone's variant
        }
        let mut members = Vec::new();
        for form in rules.reachable(vocab.token(std_id)) {
            if let Some(&col_id) = colloquial_by_form.get(form.as_str()) {
                if col_id != std_id && !class_of.contains_key(&col_id) {
                    members.push(col_id);
                }
            }
        }
        if members.is_empty() {
            continue;
        }
        let class = next_class;
        next_class += 1;
        class_of.insert(std_id, class);
        for id in members {
            class_of.insert(id, class);
        }
    }
    // everything else becomes a singleton
    let mut assignment = vec![0 as ClassId; vocab.num_regular()];
    for word in 0..vocab.num_regular() {
        let id = word as TokenId;
        let class = match class_of.get(&id) {
            Some(&c) => c,
            None => {
                let c = next_class;
                next_class += 1;
                c
            }
        };
        assignment[word] = class;
    }
    ClassMap::new(vocab, &assignment, next_class.max(1) as usize)
}
