//! Unsupervised subword segmentation and boundary-marked morph handling.
//!
//! Word-internal boundaries are rendered with a `+` on both sides, so the
//! four variants of a surface form ("kalvo", "kalvo+", "+kalvo",
//! "+kalvo+") are distinct language-model tokens. A sequence is legal iff
//! a morph starts with `+` exactly when its predecessor ends with `+`,
//! with no dangling continuation at either end.

mod morfessor;

pub use morfessor::{
    morfessor_cost, train_morfessor, viterbi_segment, CostBreakdown, MorfessorModel, MorphLexicon,
    TrainMode,
};

use crate::error::{Error, Result};

/// A morph surface form plus its continuation flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MarkedMorph {
    pub surface: String,
    pub continues_left: bool,
    pub continues_right: bool,
}

impl MarkedMorph {
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.surface.len() + 2);
        if self.continues_left {
            out.push('+');
        }
        out.push_str(&self.surface);
        if self.continues_right {
            out.push('+');
        }
        out
    }

    /// Parses a rendered token. `+` markers are only meaningful when
    /// something of the surface remains, so a bare "+" is a surface plus.
    pub fn parse(token: &str) -> MarkedMorph {
        let mut s = token;
        let continues_left = s.len() > 1 && s.starts_with('+');
        if continues_left {
            s = &s[1..];
        }
        let continues_right = s.len() > 1 && s.ends_with('+');
        if continues_right {
            s = &s[..s.len() - 1];
        }
        MarkedMorph {
            surface: s.to_string(),
            continues_left,
            continues_right,
        }
    }
}

impl std::fmt::Display for MarkedMorph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.render())
    }
}

/// Marks the word-internal boundaries of one word's segmentation.
pub fn mark_boundaries(segments: &[String]) -> Result<Vec<MarkedMorph>> {
    if segments.is_empty() {
        return Err(Error::argument("empty segmentation"));
    }
    for s in segments {
        if s.is_empty() {
            return Err(Error::argument("empty segment"));
        }
        if s.contains('+') {
            return Err(Error::argument(format!(
                "segment {s:?} contains the reserved boundary marker"
            )));
        }
    }
    let last = segments.len() - 1;
    Ok(segments
        .iter()
        .enumerate()
        .map(|(i, s)| MarkedMorph {
            surface: s.clone(),
            continues_left: i > 0,
            continues_right: i < last,
        })
        .collect())
}

/// True iff every `+`-prefix matches a preceding `+`-suffix and the
/// sequence neither starts nor ends mid-word.
pub fn legal_sequence(tokens: &[MarkedMorph]) -> bool {
    let mut open = false;
    for token in tokens {
        if token.continues_left != open {
            return false;
        }
        open = token.continues_right;
    }
    !open
}

/// Joins continuation runs back into words.
pub fn join_morphs(tokens: &[MarkedMorph]) -> Result<Vec<String>> {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut open = false;
    for (pos, token) in tokens.iter().enumerate() {
        if token.continues_left != open {
            return Err(Error::validation(format!(
                "illegal morph sequence at position {pos}: {:?}",
                token.render()
            )));
        }
        current.push_str(&token.surface);
        open = token.continues_right;
        if !open {
            words.push(std::mem::take(&mut current));
        }
    }
    if open {
        return Err(Error::validation(format!(
            "morph sequence ends mid-word after position {}",
            tokens.len() - 1
        )));
    }
    Ok(words)
}

/// Convenience: parse rendered tokens and join them.
pub fn join_rendered(tokens: &[&str]) -> Result<Vec<String>> {
    let parsed: Vec<MarkedMorph> = tokens.iter().map(|t| MarkedMorph::parse(t)).collect();
    join_morphs(&parsed)
}
