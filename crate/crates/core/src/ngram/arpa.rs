//! ARPA back-off file export and import.
//!
//! Layout: a `\data\` section with per-order gram counts, one
//! `\k-grams:` section per order with `log10prob<TAB>tokens` lines (a
//! trailing `<TAB>log10backoff` field below the top order), then `\end\`.

use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::ngram::{Entry, LanguageModel, NGramModel, UnitKind};

pub fn export_arpa(model: &NGramModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(out, "\\data\\").map_err(io_err)?;
    for k in 1..=model.order() {
        writeln!(out, "ngram {k}={}", model.num_grams(k)).map_err(io_err)?;
    }
    for k in 1..=model.order() {
        writeln!(out).map_err(io_err)?;
        writeln!(out, "\\{k}-grams:").map_err(io_err)?;
        let mut rows: Vec<(String, f64, f64)> = model
            .grams(k)
            .map(|(gram, entry)| {
                let tokens: Vec<&str> = gram.iter().map(|&u| model.unit_name(u)).collect();
                (tokens.join(" "), entry.log10_prob, entry.log10_bow)
            })
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        for (tokens, prob, bow) in rows {
            if k < model.order() {
                writeln!(out, "{prob:.7}\t{tokens}\t{bow:.7}").map_err(io_err)?;
            } else {
                writeln!(out, "{prob:.7}\t{tokens}").map_err(io_err)?;
            }
        }
    }
    writeln!(out).map_err(io_err)?;
    writeln!(out, "\\end\\").map_err(io_err)?;
    Ok(())
}

pub fn import_arpa(path: &Path, unit_kind: UnitKind) -> Result<NGramModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_arpa(&text, unit_kind)
}

pub fn parse_arpa(text: &str, unit_kind: UnitKind) -> Result<NGramModel> {
    let mut lines = text.lines().enumerate();
    // skip to \data\
    for (_, line) in lines.by_ref() {
        if line.trim() == "\\data\\" {
            break;
        }
    }
    let mut declared: Vec<usize> = Vec::new();
    let mut section_counts: Vec<usize> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, TokenId> = HashMap::new();
    let mut entries: Vec<HashMap<Box<[TokenId]>, Entry>> = Vec::new();
    let mut current: Option<usize> = None;
    for (lineno, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if line == "\\end\\" {
            break;
        }
        if let Some(rest) = line.strip_prefix("ngram ") {
            let (order, count) = rest
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno + 1, "bad ngram count line"))?;
            let order: usize = order
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno + 1, "bad order"))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno + 1, "bad count"))?;
            if order != declared.len() + 1 {
                return Err(Error::parse(lineno + 1, "orders must be consecutive"));
            }
            declared.push(count);
            continue;
        }
        if line.starts_with('\\') && line.ends_with("-grams:") {
            let k: usize = line[1..line.len() - 7]
                .parse()
                .map_err(|_| Error::parse(lineno + 1, "bad section header"))?;
            if k != entries.len() + 1 || k > declared.len() {
                return Err(Error::parse(lineno + 1, "sections out of order"));
            }
            entries.push(HashMap::new());
            section_counts.push(0);
            current = Some(k);
            continue;
        }
        let Some(k) = current else {
            return Err(Error::parse(lineno + 1, format!("unexpected line: {line}")));
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::parse(lineno + 1, "expected prob<TAB>tokens[<TAB>bow]"));
        }
        let prob: f64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(lineno + 1, "bad probability"))?;
        let tokens: Vec<&str> = fields[1].split(' ').collect();
        if tokens.len() != k {
            return Err(Error::parse(
                lineno + 1,
                format!("expected {k} tokens, found {}", tokens.len()),
            ));
        }
        let bow: f64 = if fields.len() == 3 {
            fields[2]
                .parse()
                .map_err(|_| Error::parse(lineno + 1, "bad back-off weight"))?
        } else {
            0.0
        };
        let gram: Vec<TokenId> = tokens
            .iter()
            .map(|t| {
                *index.entry((*t).to_string()).or_insert_with(|| {
                    names.push((*t).to_string());
                    (names.len() - 1) as TokenId
                })
            })
            .collect();
        entries[k - 1].insert(
            gram.into_boxed_slice(),
            Entry {
                log10_prob: prob,
                log10_bow: bow,
            },
        );
        section_counts[k - 1] += 1;
    }
    if entries.is_empty() {
        return Err(Error::parse(0, "no n-gram sections found"));
    }
    if entries.len() != declared.len() {
        return Err(Error::parse(0, "missing n-gram sections"));
    }
    for (k, (&declared, &found)) in declared.iter().zip(&section_counts).enumerate() {
        if declared != found {
            return Err(Error::parse(
                0,
                format!("order {}: declared {declared} grams, found {found}", k + 1),
            ));
        }
    }
    for special in [crate::corpus::BOS, crate::corpus::EOS] {
        if !index.contains_key(special) {
            return Err(Error::validation(format!("ARPA model lacks {special}")));
        }
    }
    if !index.contains_key(crate::corpus::UNK) {
        // tolerate models without an explicit <unk> entry
        index.insert(crate::corpus::UNK.to_string(), names.len() as TokenId);
        names.push(crate::corpus::UNK.to_string());
    }
    let order = entries.len();
    Ok(NGramModel::new(order, unit_kind, names, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{count_ngrams, TokenizedCorpus, Vocabulary};
    use crate::ngram::kn::{train_kn, word_unit_names};

    fn train_toy(order: usize) -> NGramModel {
        let vocab = Vocabulary::from_entries(
            [
                ("a".to_string(), 5u64),
                ("b".to_string(), 4),
                ("c".to_string(), 2),
                ("d".to_string(), 2),
                ("e".to_string(), 1),
            ],
            3,
            0,
            None,
        )
        .unwrap();
        let corpus = TokenizedCorpus {
            sentences: "a b c a b\nd a b e a\nc d\n"
                .lines()
                .map(|l| l.split_whitespace().map(|t| vocab.id_or_unk(t)).collect())
                .collect(),
            source: vec![],
            tags: vec![],
        };
        let counts = count_ngrams(&corpus, &vocab, order).unwrap();
        train_kn(&counts, order, &[], UnitKind::Word, word_unit_names(&vocab))
            .unwrap()
            .model
    }

    #[test]
    fn round_trip_preserves_probabilities() {
        let dir = tempfile::tempdir().unwrap();
        let model = train_toy(3);
        let path = dir.path().join("model.arpa");
        export_arpa(&model, &path).unwrap();
        let imported = import_arpa(&path, UnitKind::Word).unwrap();
        for k in 1..=3usize {
            assert_eq!(model.num_grams(k), imported.num_grams(k));
            for (gram, entry) in model.grams(k) {
                let tokens: Vec<TokenId> = gram
                    .iter()
                    .map(|&u| imported.unit_id(model.unit_name(u)).unwrap())
                    .collect();
                let h = &tokens[..k - 1];
                let w = tokens[k - 1];
                let got = imported.log10_prob(h, w);
                assert!(
                    (got - entry.log10_prob).abs() < 1e-6,
                    "gram {gram:?}: {got} vs {}",
                    entry.log10_prob
                );
            }
        }
    }

    #[test]
    fn unigram_model_has_single_section() {
        let dir = tempfile::tempdir().unwrap();
        let model = train_toy(1);
        let path = dir.path().join("uni.arpa");
        export_arpa(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("-grams:").count(), 1);
        assert!(text.contains("ngram 1="));
        assert!(!text.contains("ngram 2="));
    }

    /// Independent minimal ARPA reader validating the documented byte
    /// layout: section order, field separators, token counts per line.
    #[test]
    fn layout_matches_documented_grammar() {
        let dir = tempfile::tempdir().unwrap();
        let model = train_toy(2);
        let path = dir.path().join("two.arpa");
        export_arpa(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("\\data\\"));
        let mut counts = Vec::new();
        for line in lines.by_ref() {
            if line.is_empty() {
                break;
            }
            let (lhs, rhs) = line.split_once('=').expect("ngram k=N");
            assert!(lhs.starts_with("ngram "));
            counts.push(rhs.parse::<usize>().unwrap());
        }
        for (k, expected) in counts.iter().enumerate() {
            let header = lines.next().unwrap();
            assert_eq!(header, format!("\\{}-grams:", k + 1));
            let mut seen = 0;
            for line in lines.by_ref() {
                if line.is_empty() {
                    break;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                let is_top = k + 1 == counts.len();
                assert_eq!(fields.len(), if is_top { 2 } else { 3 }, "line {line}");
                fields[0].parse::<f64>().unwrap();
                assert_eq!(fields[1].split(' ').count(), k + 1);
                if !is_top {
                    fields[2].parse::<f64>().unwrap();
                }
                seen += 1;
            }
            assert_eq!(seen, *expected, "order {} count mismatch", k + 1);
        }
        assert_eq!(lines.next(), Some("\\end\\"));
    }
}
