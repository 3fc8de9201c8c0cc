//! Rule-based sentence segmentation for artifact text.
//!
//! Text is first cut into *units* along Markdown structure (blank lines,
//! headings, list items), then each unit is split after `.`, `!` or `?` runs
//! followed by whitespace, unless the word before the terminator is a known
//! abbreviation. Inline code spans are never split. Pieces shorter than
//! `min_sentence_chars` are merged into a neighbour.
//!
//! Segmentation is lossless: the sentences, with whitespace removed, concatenate
//! to the input with whitespace removed.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{Artifact, Sentence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Lowercase tokens that end with a period and never end a sentence.
    pub abbreviations: BTreeSet<String>,
    pub min_sentence_chars: usize,
    /// Break at Markdown list items, headings and blank lines.
    pub treat_newline_as_boundary: bool,
}

pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "etc.", "vs.", "dr.", "fig.", "no.", "cf.", "approx.", "resp.", "mr.", "mrs.", "ms.",
    "jr.", "sr.", "inc.", "ltd.", "eq.", "al.", "viz.",
];

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
            min_sentence_chars: 2,
            treat_newline_as_boundary: true,
        }
    }
}

impl SegmenterConfig {
    /// Replace the abbreviation list. Entries are lowercased; entries without a
    /// trailing period get one.
    pub fn with_abbreviations<I, S>(mut self, items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.abbreviations = items
            .into_iter()
            .map(|s| {
                let s = s.as_ref().trim().to_lowercase();
                if s.ends_with('.') { s } else { format!("{s}.") }
            })
            .collect();
        self
    }
}

/// Split every text of the artifact (title, then body blocks) into sentences
/// with contiguous ordinals.
pub fn segment(artifact: &Artifact, cfg: &SegmenterConfig) -> Vec<Sentence> {
    artifact
        .texts()
        .flat_map(|t| split_text(t, cfg))
        .enumerate()
        .map(|(ordinal, text)| Sentence { artifact: artifact.reference.clone(), ordinal, text })
        .collect()
}

/// Split one block of text into trimmed, non-empty sentences.
pub fn split_text(text: &str, cfg: &SegmenterConfig) -> Vec<String> {
    let mut out = Vec::new();
    for unit in units(text, cfg.treat_newline_as_boundary) {
        let pieces = split_unit(&unit, cfg);
        out.extend(merge_short(pieces, cfg.min_sentence_chars));
    }
    out
}

fn is_heading(line: &str) -> bool {
    let t = line.trim_start();
    let hashes = t.bytes().take_while(|&b| b == b'#').count();
    (1..=6).contains(&hashes) && t[hashes..].starts_with([' ', '\t'])
}

fn is_list_item(line: &str) -> bool {
    let t = line.trim_start();
    if let Some(rest) = t.strip_prefix(['-', '*', '+']) {
        return rest.starts_with([' ', '\t']);
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 3 {
        return false;
    }
    let rest = &t[digits..];
    (rest.starts_with(". ") || rest.starts_with(") ")) && rest.len() > 2
}

fn is_rule(line: &str) -> bool {
    let t: String = line.chars().filter(|c| !c.is_whitespace()).collect();
    t.len() >= 3 && (t.chars().all(|c| c == '-') || t.chars().all(|c| c == '*') || t.chars().all(|c| c == '='))
}

/// Cut text into structural units. Lines inside a paragraph are joined with a
/// space; list items and headings start a new unit.
fn units(text: &str, markdown: bool) -> Vec<String> {
    if !markdown {
        let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
        return if joined.is_empty() { vec![] } else { vec![joined] };
    }
    let mut out: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut current_is_heading = false;
    let flush = |out: &mut Vec<String>, current: &mut String| {
        let t = current.trim();
        if !t.is_empty() {
            out.push(t.to_string());
        }
        current.clear();
    };
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut out, &mut current);
            current_is_heading = false;
            continue;
        }
        if is_heading(line) || is_list_item(line) || is_rule(line) || current_is_heading {
            flush(&mut out, &mut current);
            current_is_heading = is_heading(line) || is_rule(line);
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(trimmed);
    }
    flush(&mut out, &mut current);
    out
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201d}' | '\u{2019}' | '*' | '_')
}

/// Split a unit on sentence terminators.
fn split_unit(unit: &str, cfg: &SegmenterConfig) -> Vec<String> {
    let chars: Vec<(usize, char)> = unit.char_indices().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut in_code = false;
    let marker = list_marker_len(unit);
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if pos < marker {
            i += 1;
            continue;
        }
        if c == '`' {
            in_code = !in_code;
            i += 1;
            continue;
        }
        if in_code || !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        // Extend over the terminator run and any closing quotes/brackets.
        let mut j = i;
        while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '!' | '?') {
            j += 1;
        }
        let single_period = c == '.' && j == i;
        while j + 1 < chars.len() && is_closer(chars[j + 1].1) {
            j += 1;
        }
        let end = chars.get(j + 1).map_or(unit.len(), |&(p, _)| p);
        let followed_by_space = chars.get(j + 1).map_or(true, |&(_, n)| n.is_whitespace());
        if followed_by_space && single_period && is_abbreviation(&unit[start..pos + 1], cfg) {
            i = j + 1;
            continue;
        }
        if followed_by_space {
            pieces.push(unit[start..end].trim().to_string());
            start = end;
        }
        i = j + 1;
    }
    if start < unit.len() {
        pieces.push(unit[start..].trim().to_string());
    }
    pieces.retain(|p| !p.is_empty());
    pieces
}

/// Whether the last word of `text` (which ends with a period) is an
/// abbreviation: a listed token or a single-letter initial such as `J.`.
fn is_abbreviation(text: &str, cfg: &SegmenterConfig) -> bool {
    let word = text.rsplit(|c: char| c.is_whitespace() || c == '(').next().unwrap_or(text);
    let lower = word.to_lowercase();
    if cfg.abbreviations.contains(&lower) {
        return true;
    }
    let core = &word[..word.len() - 1];
    let mut cs = core.chars();
    if matches!((cs.next(), cs.next()), (Some(ch), None) if ch.is_alphabetic() && ch.is_uppercase()) {
        return true;
    }
    // Dotted initialisms such as `U.S.` or `E.U.`.
    let parts: Vec<&str> = core.split('.').collect();
    parts.len() >= 2 && parts.iter().all(|p| p.chars().count() == 1 && p.chars().all(char::is_alphabetic))
}

/// Byte length of an ordered-list marker (`12. `) opening the unit.
fn list_marker_len(unit: &str) -> usize {
    let digits = unit.bytes().take_while(u8::is_ascii_digit).count();
    if (1..=3).contains(&digits) && unit[digits..].starts_with(". ") {
        digits + 1
    } else {
        0
    }
}

fn visible_len(s: &str) -> usize {
    s.chars().filter(|c| !c.is_whitespace()).count()
}

fn merge_short(pieces: Vec<String>, min_chars: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(pieces.len());
    let mut carry: Option<String> = None;
    for p in pieces {
        let p = match carry.take() {
            Some(c) => format!("{c} {p}"),
            None => p,
        };
        if visible_len(&p) < min_chars {
            match out.last_mut() {
                Some(prev) => {
                    prev.push(' ');
                    prev.push_str(&p);
                }
                None => carry = Some(p),
            }
        } else {
            out.push(p);
        }
    }
    if let Some(c) = carry {
        out.push(c);
    }
    out
}
