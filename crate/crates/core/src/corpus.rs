//! Text ingestion, vocabulary construction, n-gram counting and OOV accounting.
//!
//! Corpus files are UTF-8, one sentence per line, tokens separated by ASCII
//! whitespace. Every sentence is implicitly wrapped by `<s>` and `</s>`;
//! `<s>` is context only and never a prediction target, `</s>` terminates
//! every sentence and is always a target.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Token inventory with ids dense in `[0, len)`.
///
/// Regular tokens come first, ordered by descending count with lexicographic
/// tie-breaking, so a shortlist of the `K` most frequent tokens is exactly
/// the id range `[0, K)`. The reserved tokens `<s>`, `</s>` and `<unk>`
/// occupy the last three ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, TokenId>,
    num_regular: usize,
    shortlist_size: Option<usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from explicit (token, count) pairs. Reserved
    /// tokens must not appear in `entries`; their counts are supplied
    /// separately (`sentence_count` for `<s>`/`</s>`).
    pub fn from_entries(
        entries: impl IntoIterator<Item = (String, u64)>,
        sentence_count: u64,
        unk_count: u64,
        shortlist_size: Option<usize>,
    ) -> Result<Self> {
        let mut regular: Vec<(String, u64)> = Vec::new();
        for (token, count) in entries {
            if token == BOS || token == EOS || token == UNK {
                return Err(Error::argument(format!("reserved token in entries: {token}")));
            }
            regular.push((token, count));
        }
        regular.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let num_regular = regular.len();
        if let Some(k) = shortlist_size {
            if k > num_regular + 3 {
                return Err(Error::argument(format!(
                    "shortlist size {k} exceeds vocabulary size {}",
                    num_regular + 3
                )));
            }
        }
        let mut tokens = Vec::with_capacity(num_regular + 3);
        let mut counts = Vec::with_capacity(num_regular + 3);
        for (token, count) in regular {
            tokens.push(token);
            counts.push(count);
        }
        tokens.push(BOS.to_string());
        counts.push(sentence_count);
        tokens.push(EOS.to_string());
        counts.push(sentence_count);
        tokens.push(UNK.to_string());
        counts.push(unk_count);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(id, t)| (t.clone(), id as TokenId))
            .collect();
        Ok(Vocabulary {
            tokens,
            counts,
            index,
            num_regular,
            shortlist_size,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn num_regular(&self) -> usize {
        self.num_regular
    }

    pub fn bos(&self) -> TokenId {
        self.num_regular as TokenId
    }

    pub fn eos(&self) -> TokenId {
        self.num_regular as TokenId + 1
    }

    pub fn unk(&self) -> TokenId {
        self.num_regular as TokenId + 2
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id as usize >= self.num_regular
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Maps a token to its id, falling back to `<unk>`.
    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or_else(|| self.unk())
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts[id as usize]
    }

    pub fn shortlist_size(&self) -> Option<usize> {
        self.shortlist_size
    }

    pub fn set_shortlist_size(&mut self, k: Option<usize>) -> Result<()> {
        if let Some(k) = k {
            if k > self.len() {
                return Err(Error::argument(format!(
                    "shortlist size {k} exceeds vocabulary size {}",
                    self.len()
                )));
            }
        }
        self.shortlist_size = k;
        Ok(())
    }

    /// Whether `id` is inside the shortlist. Reserved tokens are always
    /// available to a shortlist model.
    pub fn in_shortlist(&self, id: TokenId) -> bool {
        match self.shortlist_size {
            Some(k) => (id as usize) < k || self.is_special(id),
            None => true,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.tokens.len()).map(|id| id as TokenId)
    }

    /// Writes `token<TAB>count` lines, frequency-descending. Reserved tokens
    /// are implicit and not written.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for id in 0..self.num_regular {
            out.push_str(&self.tokens[id]);
            out.push('\t');
            out.push_str(&self.counts[id].to_string());
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (token, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno + 1, "expected token<TAB>count"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno + 1, format!("bad count: {count}")))?;
            entries.push((token.to_string(), count));
        }
        Vocabulary::from_entries(entries, 0, 0, None)
    }
}

/// Sentences as raw token strings, before any vocabulary mapping.
#[derive(Debug, Clone, Default)]
pub struct RawCorpus {
    pub sentences: Vec<Vec<String>>,
    /// Per-sentence index into `tags`.
    pub source: Vec<u32>,
    pub tags: Vec<String>,
}

/// Sentences as token ids. `<s>`/`</s>` wrapping is implicit; the stored
/// ids are the inner tokens only.
#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    pub sentences: Vec<Vec<TokenId>>,
    pub source: Vec<u32>,
    pub tags: Vec<String>,
}

fn read_sentences(
    path: &Path,
    case_fold: bool,
    mut on_sentence: impl FnMut(Vec<String>),
) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut buf = Vec::new();
    let mut lineno = 0usize;
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let line = std::str::from_utf8(&buf).map_err(|_| Error::Utf8 {
            path: path.to_path_buf(),
            line: lineno,
        })?;
        let mut tokens: Vec<String> = line.split_ascii_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            continue; // empty lines are skipped
        }
        if case_fold {
            for t in &mut tokens {
                *t = t.to_lowercase();
            }
        }
        on_sentence(tokens);
    }
    Ok(())
}

fn tag_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Loads corpus files keeping raw token strings, for vocabulary building
/// and OOV accounting. The source tag of each sentence is the stem of the
/// file it came from.
pub fn load_raw(paths: &[impl AsRef<Path>], case_fold: bool) -> Result<RawCorpus> {
    let mut corpus = RawCorpus::default();
    for path in paths {
        let path = path.as_ref();
        let tag_idx = corpus.tags.len() as u32;
        corpus.tags.push(tag_for(path));
        read_sentences(path, case_fold, |tokens| {
            corpus.sentences.push(tokens);
            corpus.source.push(tag_idx);
        })?;
    }
    Ok(corpus)
}

/// Loads corpus files mapping tokens through `vocab`; out-of-vocabulary
/// tokens become `<unk>`.
pub fn load_tokenized(
    paths: &[impl AsRef<Path>],
    vocab: &Vocabulary,
    case_fold: bool,
) -> Result<TokenizedCorpus> {
    let raw = load_raw(paths, case_fold)?;
    Ok(tokenize(&raw, vocab))
}

pub fn tokenize(raw: &RawCorpus, vocab: &Vocabulary) -> TokenizedCorpus {
    TokenizedCorpus {
        sentences: raw
            .sentences
            .iter()
            .map(|s| s.iter().map(|t| vocab.id_or_unk(t)).collect())
            .collect(),
        source: raw.source.clone(),
        tags: raw.tags.clone(),
    }
}

impl TokenizedCorpus {
    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    /// Token count excluding the implicit `<s>`/`</s>` wrapping.
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }

    /// Renders the corpus back to text: one sentence per line, tokens
    /// separated by single spaces, trailing newline.
    pub fn detokenize(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            let mut first = true;
            for &id in sentence {
                if !first {
                    out.push(' ');
                }
                out.push_str(vocab.token(id));
                first = false;
            }
            out.push('\n');
        }
        out
    }
}

/// Builds a vocabulary from a raw corpus: tokens with `count >= min_count`,
/// truncated to the `max_size` most frequent if set.
pub fn build_vocabulary(
    corpus: &RawCorpus,
    min_count: u64,
    max_size: Option<usize>,
    shortlist_size: Option<usize>,
) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::argument("min_count must be >= 1"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for sentence in &corpus.sentences {
        for token in sentence {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut excluded: u64 = 0;
    entries.retain(|(_, c)| {
        if *c >= min_count {
            true
        } else {
            excluded += *c;
            false
        }
    });
    if let Some(max) = max_size {
        for (_, c) in entries.iter().skip(max) {
            excluded += *c;
        }
        entries.truncate(max);
    }
    Vocabulary::from_entries(
        entries,
        corpus.sentences.len() as u64,
        excluded,
        shortlist_size,
    )
}

/// N-gram counts of every order up to `order`, closed under prefixes.
///
/// Counting runs over `<s> tokens </s>`: every window that does not end at
/// the leading `<s>` is counted, and for orders above one the `<s>` unigram
/// itself is kept (count = number of sentences) so that `<s>`-initial
/// k-grams have their prefix in the table.
#[derive(Debug, Clone)]
pub struct CountTable {
    order: usize,
    grams: Vec<HashMap<Box<[TokenId]>, u64>>,
    num_sentences: u64,
}

impl CountTable {
    /// Assembles a table from per-order gram maps (index 0 holds unigrams).
    pub fn from_counts(
        grams: Vec<HashMap<Box<[TokenId]>, u64>>,
        num_sentences: u64,
    ) -> Result<Self> {
        if grams.is_empty() {
            return Err(Error::argument("at least one order required"));
        }
        Ok(CountTable {
            order: grams.len(),
            grams,
            num_sentences,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_sentences(&self) -> u64 {
        self.num_sentences
    }

    pub fn count(&self, gram: &[TokenId]) -> u64 {
        assert!(!gram.is_empty() && gram.len() <= self.order);
        self.grams[gram.len() - 1].get(gram).copied().unwrap_or(0)
    }

    /// All k-grams of a given length, unordered.
    pub fn grams(&self, k: usize) -> impl Iterator<Item = (&[TokenId], u64)> + '_ {
        assert!(k >= 1 && k <= self.order);
        self.grams[k - 1].iter().map(|(g, &c)| (g.as_ref(), c))
    }

    pub fn num_grams(&self, k: usize) -> usize {
        self.grams[k - 1].len()
    }

    /// Total unigram event count (tokens plus `</s>` events, excluding `<s>`).
    pub fn total_events(&self) -> u64 {
        self.grams(1)
            .filter(|(g, _)| g[0] != u32::MAX)
            .map(|(_, c)| c)
            .sum()
    }

    /// Exports `k-gram tokens<TAB>count` lines in deterministic order.
    pub fn export(&self, vocab: &Vocabulary, writer: &mut impl Write) -> Result<()> {
        for k in 1..=self.order {
            let mut rows: Vec<(String, u64)> = self
                .grams(k)
                .map(|(g, c)| {
                    let toks: Vec<&str> = g.iter().map(|&id| vocab.token(id)).collect();
                    (toks.join(" "), c)
                })
                .collect();
            rows.sort();
            for (gram, count) in rows {
                writeln!(writer, "{gram}\t{count}")
                    .map_err(|e| Error::io("<count export>", e))?;
            }
        }
        Ok(())
    }
}

/// Counts all n-grams of the corpus up to `order`.
pub fn count_ngrams(corpus: &TokenizedCorpus, vocab: &Vocabulary, order: usize) -> Result<CountTable> {
    if order < 1 {
        return Err(Error::argument("order must be >= 1"));
    }
    let bos = vocab.bos();
    let eos = vocab.eos();
    let mut grams: Vec<HashMap<Box<[TokenId]>, u64>> = vec![HashMap::new(); order];
    for sentence in &corpus.sentences {
        let mut padded = Vec::with_capacity(sentence.len() + 2);
        padded.push(bos);
        padded.extend_from_slice(sentence);
        padded.push(eos);
        for k in 1..=order {
            for window in padded.windows(k) {
                if *window.last().unwrap() == bos {
                    continue;
                }
                *grams[k - 1].entry(window.into()).or_insert(0) += 1;
            }
        }
    }
    if order >= 2 {
        grams[0].insert(
            vec![bos].into_boxed_slice(),
            corpus.sentences.len() as u64,
        );
    }
    Ok(CountTable {
        order,
        grams,
        num_sentences: corpus.sentences.len() as u64,
    })
}

/// Fraction of non-special evaluation tokens absent from `vocab`.
pub fn oov_rate(vocab: &Vocabulary, corpus: &RawCorpus) -> Result<f64> {
    let mut total = 0u64;
    let mut oov = 0u64;
    for sentence in &corpus.sentences {
        for token in sentence {
            if token == BOS || token == EOS || token == UNK {
                continue;
            }
            total += 1;
            if vocab.id(token).is_none() {
                oov += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::validation("oov rate undefined for empty corpus"));
    }
    Ok(oov as f64 / total as f64)
}
