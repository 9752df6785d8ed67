//! MAP estimation of a morph lexicon by recursive greedy splitting, and
//! Viterbi segmentation with the trained lexicon.
//!
//! The cost of a lexicon together with its segmented data is, in nats,
//!
//! ```text
//! cost = sum_m (|m| + 1) ln(|S| + 1)                    (character code)
//!      + ln (N-1)! - ln (M-1)! - ln (N-M)!              (frequency assignment)
//!      - alpha * sum_m c(m) ln(c(m) / N)                (data likelihood)
//! ```
//!
//! where `S` is the character inventory, `N` the total morph token count
//! and `M` the number of morph types. `alpha` scales the data likelihood:
//! larger values resist segmentation and grow the lexicon.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

fn xlnx(x: u64) -> f64 {
    if x == 0 {
        0.0
    } else {
        let x = x as f64;
        x * x.ln()
    }
}

/// Morph inventory with usage counts and the alpha hyperparameter.
#[derive(Debug, Clone)]
pub struct MorphLexicon {
    morphs: HashMap<String, u64>,
    alpha: f64,
    charset: HashSet<char>,
    /// N: total morph tokens
    total: u64,
    /// sum over types of (chars + 1), for the character code term
    code_units: u64,
    /// sum over types of c ln c, for the data term
    sum_c_ln_c: f64,
}

impl MorphLexicon {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(Error::argument("alpha must be positive"));
        }
        Ok(MorphLexicon {
            morphs: HashMap::new(),
            alpha,
            charset: HashSet::new(),
            total: 0,
            code_units: 0,
            sum_c_ln_c: 0.0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_types(&self) -> usize {
        self.morphs.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    pub fn count(&self, morph: &str) -> u64 {
        self.morphs.get(morph).copied().unwrap_or(0)
    }

    pub fn contains(&self, morph: &str) -> bool {
        self.morphs.contains_key(morph)
    }

    pub fn morphs(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.morphs.iter().map(|(m, &c)| (m.as_str(), c))
    }

    /// Extends the character inventory; unknown characters are absorbed,
    /// never an error.
    pub fn extend_charset(&mut self, word: &str) {
        self.charset.extend(word.chars());
    }

    pub fn add(&mut self, morph: &str, count: u64) {
        debug_assert!(count > 0);
        self.extend_charset(morph);
        let entry = self.morphs.entry(morph.to_string()).or_insert(0);
        let old = *entry;
        *entry += count;
        if old == 0 {
            self.code_units += morph.chars().count() as u64 + 1;
        }
        self.sum_c_ln_c += xlnx(old + count) - xlnx(old);
        self.total += count;
    }

    pub fn remove(&mut self, morph: &str, count: u64) {
        let entry = self.morphs.get_mut(morph).expect("removing unknown morph");
        assert!(*entry >= count, "removing more {morph:?} than stored");
        let old = *entry;
        *entry -= count;
        self.sum_c_ln_c += xlnx(old - count) - xlnx(old);
        self.total -= count;
        if *entry == 0 {
            // zero-count morphs must leave the lexicon
            self.morphs.remove(morph);
            self.code_units -= morph.chars().count() as u64 + 1;
        }
    }

    /// Writes `count<TAB>morph` lines, sorted by morph.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<(&str, u64)> = self.morphs().collect();
        rows.sort();
        let mut out = String::new();
        for (morph, count) in rows {
            out.push_str(&format!("{count}\t{morph}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, alpha: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lexicon = MorphLexicon::new(alpha)?;
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (count, morph) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno + 1, "expected count<TAB>morph"))?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(lineno + 1, format!("bad count: {count}")))?;
            if count == 0 {
                return Err(Error::parse(lineno + 1, "zero-count morph"));
            }
            lexicon.add(morph, count);
        }
        Ok(lexicon)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CostBreakdown {
    pub character_code: f64,
    pub frequency_assignment: f64,
    pub data_likelihood: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.character_code + self.frequency_assignment + self.data_likelihood
    }
}

/// Evaluates the MAP cost of a lexicon (counts already reflect the
/// segmented data).
pub fn morfessor_cost(lexicon: &MorphLexicon) -> Result<CostBreakdown> {
    if lexicon.morphs.is_empty() {
        return Err(Error::argument("empty lexicon has no cost"));
    }
    Ok(cost_unchecked(lexicon))
}

fn cost_unchecked(lexicon: &MorphLexicon) -> CostBreakdown {
    let n = lexicon.total;
    let m = lexicon.morphs.len() as u64;
    let sigma = lexicon.charset.len() as f64;
    let character_code = lexicon.code_units as f64 * (sigma + 1.0).ln();
    let frequency_assignment = if n == 0 {
        0.0
    } else {
        ln_factorial(n - 1) - ln_factorial(m - 1) - ln_factorial(n - m)
    };
    // -alpha * sum c ln(c/N) = -alpha * (sum c ln c - N ln N)
    let data_likelihood = -lexicon.alpha * (lexicon.sum_c_ln_c - xlnx(n));
    CostBreakdown {
        character_code,
        frequency_assignment,
        data_likelihood,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// One count per word type (the default).
    Types,
    /// Weight words by their corpus counts.
    Tokens,
}

/// A trained lexicon plus the segmentation of every training word.
#[derive(Debug, Clone)]
pub struct MorfessorModel {
    pub lexicon: MorphLexicon,
    segmentations: HashMap<String, Vec<String>>,
    pub final_cost: f64,
    pub epoch_costs: Vec<f64>,
}

impl MorfessorModel {
    /// The analysis of a word: the stored training segmentation when the
    /// word was seen in training, otherwise a Viterbi segmentation.
    pub fn segment(&self, word: &str) -> Vec<String> {
        match self.segmentations.get(word) {
            Some(s) => s.clone(),
            None => viterbi_segment(&self.lexicon, word),
        }
    }

    pub fn training_words(&self) -> impl Iterator<Item = (&str, &[String])> + '_ {
        self.segmentations
            .iter()
            .map(|(w, s)| (w.as_str(), s.as_slice()))
    }
}

/// Relative cost improvement per epoch below which training stops.
const CONVERGENCE: f64 = 0.001;
const MAX_EPOCHS: usize = 100;

/// Trains a morph lexicon by recursive greedy splitting.
///
/// Words are processed in a seeded random order each epoch. A word is
/// re-analyzed by removing its current morphs and recursively choosing,
/// for the word and each produced part, between keeping it whole and the
/// best two-way split; the new analysis is kept only when it strictly
/// lowers the total cost. Epochs repeat until the relative improvement
/// falls under 0.1%.
pub fn train_morfessor(
    wordlist: &HashMap<String, u64>,
    alpha: f64,
    seed: u64,
    mode: TrainMode,
) -> Result<MorfessorModel> {
    if wordlist.is_empty() {
        return Err(Error::argument("empty word list"));
    }
    let mut words: Vec<(String, u64)> = wordlist
        .iter()
        .filter(|(w, _)| !w.is_empty())
        .map(|(w, c)| {
            let count = match mode {
                TrainMode::Types => 1,
                TrainMode::Tokens => (*c).max(1),
            };
            (w.clone(), count)
        })
        .collect();
    words.sort(); // deterministic base order before seeded shuffling
    if words.is_empty() {
        return Err(Error::argument("word list holds only empty words"));
    }

    let mut lexicon = MorphLexicon::new(alpha)?;
    let mut segmentations: HashMap<String, Vec<String>> = HashMap::new();
    for (word, count) in &words {
        lexicon.add(word, *count);
        segmentations.insert(word.clone(), vec![word.clone()]);
    }
    let initial_cost = cost_unchecked(&lexicon).total();
    let mut epoch_costs = vec![initial_cost];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut cost = initial_cost;
    for _epoch in 0..MAX_EPOCHS {
        words.shuffle(&mut rng);
        for (word, count) in &words {
            let old_segments = segmentations[word].clone();
            for segment in &old_segments {
                lexicon.remove(segment, *count);
            }
            let old_cost = cost;
            let new_segments = optimize_substring(&mut lexicon, word, *count);
            let new_cost = cost_unchecked(&lexicon).total();
            if new_cost < old_cost {
                segmentations.insert(word.clone(), new_segments);
                cost = new_cost;
            } else {
                for segment in &new_segments {
                    lexicon.remove(segment, *count);
                }
                for segment in &old_segments {
                    lexicon.add(segment, *count);
                }
            }
        }
        let prev = *epoch_costs.last().unwrap();
        epoch_costs.push(cost);
        if prev - cost < CONVERGENCE * prev.abs() {
            break;
        }
    }
    Ok(MorfessorModel {
        final_cost: cost,
        lexicon,
        segmentations,
        epoch_costs,
    })
}

/// Recursively analyzes `piece`, leaving its chosen morphs added to the
/// lexicon, and returns them in order.
fn optimize_substring(lexicon: &mut MorphLexicon, piece: &str, count: u64) -> Vec<String> {
    lexicon.add(piece, count);
    let whole_cost = cost_unchecked(lexicon).total();
    let boundaries: Vec<usize> = piece
        .char_indices()
        .skip(1)
        .map(|(i, _)| i)
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for &split in &boundaries {
        let (left, right) = piece.split_at(split);
        lexicon.remove(piece, count);
        lexicon.add(left, count);
        lexicon.add(right, count);
        let split_cost = cost_unchecked(lexicon).total();
        lexicon.remove(left, count);
        lexicon.remove(right, count);
        lexicon.add(piece, count);
        if split_cost < whole_cost && best.map_or(true, |(c, _)| split_cost < c) {
            best = Some((split_cost, split));
        }
    }
    match best {
        None => vec![piece.to_string()],
        Some((_, split)) => {
            let (left, right) = piece.split_at(split);
            let (left, right) = (left.to_string(), right.to_string());
            lexicon.remove(piece, count);
            let mut segments = optimize_substring(lexicon, &left, count);
            segments.extend(optimize_substring(lexicon, &right, count));
            segments
        }
    }
}

/// Viterbi segmentation: the morph sequence maximizing `sum ln p(m)` over
/// all concatenations covering the word. Characters missing from the
/// lexicon fall back to single-character morphs at a fixed penalty of
/// `ln p(rarest morph) - ln 10`, so every word is segmentable.
pub fn viterbi_segment(lexicon: &MorphLexicon, word: &str) -> Vec<String> {
    if word.is_empty() {
        return Vec::new();
    }
    if lexicon.morphs.is_empty() || lexicon.total == 0 {
        return word.chars().map(|c| c.to_string()).collect();
    }
    let total = lexicon.total as f64;
    let min_count = lexicon.morphs.values().copied().min().unwrap_or(1);
    let fallback = (min_count as f64 / total).ln() - std::f64::consts::LN_10;
    let max_len_chars = lexicon.morphs.keys().map(|m| m.chars().count()).max().unwrap();

    // DP over character boundaries
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let n = bounds.len() - 1; // number of characters
    let mut score = vec![f64::NEG_INFINITY; n + 1];
    let mut back = vec![usize::MAX; n + 1];
    score[0] = 0.0;
    for end in 1..=n {
        for start in end.saturating_sub(max_len_chars.max(1))..end {
            if score[start] == f64::NEG_INFINITY {
                continue;
            }
            let piece = &word[bounds[start]..bounds[end]];
            let step = match lexicon.morphs.get(piece) {
                Some(&c) => (c as f64 / total).ln(),
                None if end - start == 1 => fallback,
                None => continue,
            };
            let candidate = score[start] + step;
            if candidate > score[end] {
                score[end] = candidate;
                back[end] = start;
            }
        }
    }
    let mut segments = Vec::new();
    let mut end = n;
    while end > 0 {
        let start = back[end];
        segments.push(word[bounds[start]..bounds[end]].to_string());
        end = start;
    }
    segments.reverse();
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon_of(entries: &[(&str, u64)], alpha: f64) -> MorphLexicon {
        let mut lex = MorphLexicon::new(alpha).unwrap();
        for (m, c) in entries {
            lex.add(m, *c);
        }
        lex
    }

    #[test]
    fn empty_lexicon_has_no_cost() {
        let lex = MorphLexicon::new(1.0).unwrap();
        assert!(morfessor_cost(&lex).is_err());
    }

    #[test]
    fn cost_components_match_hand_formulas() {
        // lexicon {ab:10, a:1, b:1}: Sigma = {a,b}
        let lex = lexicon_of(&[("ab", 10), ("a", 1), ("b", 1)], 2.0);
        let cost = morfessor_cost(&lex).unwrap();
        let sigma_term = 3.0f64.ln();
        // code units: (2+1) + (1+1) + (1+1) = 7
        assert!((cost.character_code - 7.0 * sigma_term).abs() < 1e-12);
        // N = 12, M = 3: ln 11! - ln 2! - ln 9!
        let expected_freq = ln_factorial(11) - ln_factorial(2) - ln_factorial(9);
        assert!((cost.frequency_assignment - expected_freq).abs() < 1e-9);
        // data: -alpha [10 ln(10/12) + 1 ln(1/12) + 1 ln(1/12)]
        let expected_data = -2.0
            * (10.0 * (10.0f64 / 12.0).ln() + (1.0f64 / 12.0).ln() + (1.0f64 / 12.0).ln());
        assert!((cost.data_likelihood - expected_data).abs() < 1e-9);
    }

    #[test]
    fn alpha_tilts_the_whole_word_split_decision() {
        // Word list {"ab": 10, "a": 1, "b": 1} (token counts), evaluated at
        // both extremes by hand: keeping "ab" whole, versus splitting every
        // "ab" into a + b (lexicon {a:11, b:11}).
        let whole = |alpha: f64| {
            morfessor_cost(&lexicon_of(&[("ab", 10), ("a", 1), ("b", 1)], alpha))
                .unwrap()
                .total()
        };
        let split = |alpha: f64| {
            morfessor_cost(&lexicon_of(&[("a", 11), ("b", 11)], alpha))
                .unwrap()
                .total()
        };
        // small alpha: the prior dominates and the split lexicon is cheaper
        assert!(split(0.05) < whole(0.05));
        // large alpha: the likelihood dominates and whole words win
        assert!(whole(10.0) < split(10.0));
    }

    #[test]
    fn duplicating_counts_doubles_data_term_only() {
        let lex1 = lexicon_of(&[("aa", 1), ("b", 2)], 0.7);
        let lex2 = lexicon_of(&[("aa", 2), ("b", 4)], 0.7);
        let c1 = morfessor_cost(&lex1).unwrap();
        let c2 = morfessor_cost(&lex2).unwrap();
        assert!((c2.data_likelihood - 2.0 * c1.data_likelihood).abs() < 1e-9);
        assert_eq!(c1.character_code, c2.character_code);
    }

    #[test]
    fn alpha_zero_limit_orders_by_prior() {
        // As alpha -> 0 the data term vanishes; ordering is by prior alone.
        let small = 1e-12;
        let one_morph = lexicon_of(&[("aa", 1)], small);
        let two_morphs = lexicon_of(&[("a", 2)], small);
        let c1 = morfessor_cost(&one_morph).unwrap().total();
        let c2 = morfessor_cost(&two_morphs).unwrap().total();
        // "a" has a shorter code than "aa"
        assert!(c2 < c1);
    }

    #[test]
    fn incremental_aggregates_match_recomputation() {
        let mut lex = lexicon_of(&[("abc", 3), ("de", 1)], 1.0);
        lex.add("abc", 2);
        lex.remove("de", 1);
        lex.add("x", 4);
        lex.remove("abc", 5);
        // the charset only grows: rebuild with the same inventory
        let mut fresh = lexicon_of(&[("x", 4)], 1.0);
        fresh.extend_charset("abcde");
        let a = morfessor_cost(&lex).unwrap();
        let b = morfessor_cost(&fresh).unwrap();
        assert!((a.total() - b.total()).abs() < 1e-9);
        assert_eq!(lex.num_types(), 1);
        assert_eq!(lex.total_tokens(), 4);
    }

    #[test]
    fn training_splits_shared_structure() {
        // {"aab", "ab", "b"}: at a small alpha the shared pieces win and
        // the total cost lands below the whole-word baseline.
        let wordlist: HashMap<String, u64> =
            [("aab", 1u64), ("ab", 1), ("b", 1)]
                .into_iter()
                .map(|(w, c)| (w.to_string(), c))
                .collect();
        let model = train_morfessor(&wordlist, 0.1, 7, TrainMode::Types).unwrap();
        // strictly below the whole-word baseline
        assert!(model.final_cost < model.epoch_costs[0]);
        // exhaustive oracle over all segmentations of all three words:
        // greedy never beats it, and at this size it should reach it
        let oracle_best = exhaustive_best_cost(&wordlist, 0.1);
        assert!(model.final_cost >= oracle_best - 1e-9);
        assert!(
            (model.final_cost - oracle_best).abs() < 1e-6,
            "greedy {} vs exhaustive {oracle_best}",
            model.final_cost
        );
    }

    /// Exhaustive search over every binary segmentation of every word,
    /// evaluating the cost from scratch.
    fn exhaustive_best_cost(wordlist: &HashMap<String, u64>, alpha: f64) -> f64 {
        fn all_segmentations(word: &str) -> Vec<Vec<String>> {
            let chars: Vec<char> = word.chars().collect();
            let n = chars.len();
            let mut result = Vec::new();
            for mask in 0..(1usize << (n.saturating_sub(1))) {
                let mut segs = Vec::new();
                let mut current = String::new();
                for (i, &ch) in chars.iter().enumerate() {
                    current.push(ch);
                    if i + 1 == n || mask & (1 << i) != 0 {
                        segs.push(std::mem::take(&mut current));
                    }
                }
                result.push(segs);
            }
            result
        }
        let words: Vec<(&String, &u64)> = {
            let mut v: Vec<_> = wordlist.iter().collect();
            v.sort();
            v
        };
        let options: Vec<Vec<Vec<String>>> =
            words.iter().map(|(w, _)| all_segmentations(w)).collect();
        let mut indices = vec![0usize; words.len()];
        let mut best = f64::INFINITY;
        loop {
            let mut lex = MorphLexicon::new(alpha).unwrap();
            for (i, (_, count)) in words.iter().enumerate() {
                for seg in &options[i][indices[i]] {
                    lex.add(seg, **count);
                }
            }
            let cost = morfessor_cost(&lex).unwrap().total();
            if cost < best {
                best = cost;
            }
            // odometer increment over the segmentation choices
            let mut i = 0;
            loop {
                if i == indices.len() {
                    return best;
                }
                indices[i] += 1;
                if indices[i] < options[i].len() {
                    break;
                }
                indices[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn single_word_large_alpha_stays_whole() {
        let wordlist: HashMap<String, u64> = [("abcd".to_string(), 5u64)].into();
        let model = train_morfessor(&wordlist, 10.0, 3, TrainMode::Tokens).unwrap();
        assert_eq!(model.segment("abcd"), vec!["abcd".to_string()]);
    }

    #[test]
    fn viterbi_prefers_the_likelier_cover() {
        // lexicon {a: 2, b: 1, ab: 1} over total 4:
        // p(ab) = 0.25 > p(a) p(b) = 0.5 * 0.25 = 0.125
        let lex = lexicon_of(&[("a", 2), ("b", 1), ("ab", 1)], 1.0);
        assert_eq!(viterbi_segment(&lex, "ab"), vec!["ab".to_string()]);
    }

    #[test]
    fn viterbi_equals_bruteforce_enumeration() {
        let lex = lexicon_of(
            &[
                ("a", 12),
                ("b", 7),
                ("ab", 5),
                ("ba", 3),
                ("aba", 2),
                ("bb", 2),
                ("aa", 4),
                ("abab", 1),
            ],
            1.0,
        );
        let total = lex.total_tokens() as f64;
        let min_count = 1.0f64;
        let fallback = (min_count / total).ln() - std::f64::consts::LN_10;
        let score_of = |segs: &[String]| -> f64 {
            segs.iter()
                .map(|s| match lex.count(s) {
                    0 => {
                        if s.chars().count() == 1 {
                            fallback
                        } else {
                            f64::NEG_INFINITY
                        }
                    }
                    c => (c as f64 / total).ln(),
                })
                .sum()
        };
        for word in ["abab", "aababb", "babababa", "abc", "aaaabbbb"] {
            let chars: Vec<char> = word.chars().collect();
            let n = chars.len();
            let mut best = f64::NEG_INFINITY;
            for mask in 0..(1usize << (n - 1)) {
                let mut segs = Vec::new();
                let mut cur = String::new();
                for (i, &ch) in chars.iter().enumerate() {
                    cur.push(ch);
                    if i + 1 == n || mask & (1 << i) != 0 {
                        segs.push(std::mem::take(&mut cur));
                    }
                }
                let s = score_of(&segs);
                if s > best {
                    best = s;
                }
            }
            let viterbi = viterbi_segment(&lex, word);
            let got = score_of(&viterbi);
            assert!(
                (got - best).abs() < 1e-9,
                "{word}: viterbi {viterbi:?} scored {got}, brute force {best}"
            );
            assert_eq!(viterbi.concat(), word);
        }
    }

    #[test]
    fn unseen_characters_fall_back_to_singles() {
        let lex = lexicon_of(&[("ab", 3)], 1.0);
        let segs = viterbi_segment(&lex, "axb");
        assert_eq!(segs.concat(), "axb");
        assert!(segs.contains(&"x".to_string()));
    }

    #[test]
    fn stored_segmentations_reproduce_lexicon_counts() {
        let wordlist: HashMap<String, u64> = [
            ("kalvoja", 3u64),
            ("kalvo", 2),
            ("luento", 4),
            ("luentoja", 1),
            ("ja", 6),
        ]
        .into_iter()
        .map(|(w, c)| (w.to_string(), c))
        .collect();
        let model = train_morfessor(&wordlist, 0.3, 11, TrainMode::Tokens).unwrap();
        let mut recount: HashMap<String, u64> = HashMap::new();
        for (word, segments) in model.training_words() {
            let count = wordlist[word];
            for s in segments {
                *recount.entry(s.clone()).or_insert(0) += count;
            }
        }
        assert_eq!(recount.len(), model.lexicon.num_types());
        for (morph, count) in model.lexicon.morphs() {
            assert_eq!(recount.get(morph).copied().unwrap_or(0), count, "{morph}");
        }
    }

    #[test]
    fn epoch_costs_non_increasing() {
        let mut wordlist: HashMap<String, u64> = HashMap::new();
        for i in 0..40 {
            wordlist.insert(format!("stem{}suffix", i % 7), 1 + (i % 3) as u64);
            wordlist.insert(format!("stem{}", i % 5), 1);
        }
        let model = train_morfessor(&wordlist, 0.2, 5, TrainMode::Types).unwrap();
        for pair in model.epoch_costs.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "cost rose: {pair:?}");
        }
    }
}
