//! Lexical extraction of Javadocs and inline comments from Java sources.
//!
//! The scanner has four modes (code, string, char, comment) plus text blocks,
//! so it survives files that do not parse. A second pass over a masked copy of
//! the source (comments and literal contents blanked, offsets preserved)
//! recovers type and method bodies from brace structure.

use std::collections::{BTreeMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Artifact, ArtifactKind, ArtifactRef, BodyBlock, Commit};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommentError {
    #[error("no source supplied for changed Java file {0}")]
    MissingSource(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CommentLevel {
    Class,
    Method,
    Inline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JavaCommentSpan {
    pub file_path: String,
    pub byte_range: (usize, usize),
    pub level: CommentLevel,
    /// Declared name of the class or method; empty for inline comments.
    pub attached_symbol: String,
    /// Comment text without delimiters and leading asterisks.
    pub text: String,
    /// 1-based line of the comment start.
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawCommentKind {
    Line,
    Block,
    Javadoc,
}

/// A comment token found by the scanner. `range` covers the delimiters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawComment {
    pub range: Range<usize>,
    pub kind: RawCommentKind,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Code,
    Str,
    TextBlock,
    Char,
    LineComment,
    BlockComment,
}

/// Scan `src` and return every comment token in source order, together with a
/// masked copy of the source in which comment bytes and literal contents are
/// replaced by spaces (newlines kept).
pub fn scan(src: &str) -> (Vec<RawComment>, Vec<u8>) {
    let b = src.as_bytes();
    let mut masked = b.to_vec();
    let mut comments = Vec::new();
    let mut mode = Mode::Code;
    let mut start = 0;
    let mut i = 0;
    let blank = |masked: &mut Vec<u8>, i: usize| {
        if masked[i] != b'\n' {
            masked[i] = b' ';
        }
    };
    while i < b.len() {
        let c = b[i];
        let next = b.get(i + 1).copied();
        match mode {
            Mode::Code => match (c, next) {
                (b'/', Some(b'/')) => {
                    mode = Mode::LineComment;
                    start = i;
                    blank(&mut masked, i);
                    blank(&mut masked, i + 1);
                    i += 2;
                    continue;
                }
                (b'/', Some(b'*')) => {
                    mode = Mode::BlockComment;
                    start = i;
                    blank(&mut masked, i);
                    blank(&mut masked, i + 1);
                    i += 2;
                    continue;
                }
                (b'"', _) if b.get(i + 1..i + 3) == Some(b"\"\"") => {
                    mode = Mode::TextBlock;
                    i += 3;
                    continue;
                }
                (b'"', _) => mode = Mode::Str,
                (b'\'', _) => mode = Mode::Char,
                _ => {}
            },
            Mode::Str | Mode::Char => {
                let close = if mode == Mode::Str { b'"' } else { b'\'' };
                if c == b'\\' && next.is_some_and(|n| n != b'\n') {
                    blank(&mut masked, i);
                    blank(&mut masked, i + 1);
                    i += 2;
                    continue;
                }
                if c == close || c == b'\n' {
                    mode = Mode::Code;
                } else {
                    blank(&mut masked, i);
                }
            }
            Mode::TextBlock => {
                if c == b'\\' && next.is_some() {
                    blank(&mut masked, i);
                    blank(&mut masked, i + 1);
                    i += 2;
                    continue;
                }
                if b.get(i..i + 3) == Some(b"\"\"\"") {
                    mode = Mode::Code;
                    i += 3;
                    continue;
                }
                blank(&mut masked, i);
            }
            Mode::LineComment => {
                if c == b'\n' {
                    comments.push(RawComment { range: start..i, kind: RawCommentKind::Line });
                    mode = Mode::Code;
                } else {
                    blank(&mut masked, i);
                }
            }
            Mode::BlockComment => {
                if c == b'*' && next == Some(b'/') && i > start + 1 {
                    blank(&mut masked, i);
                    blank(&mut masked, i + 1);
                    let range = start..i + 2;
                    comments.push(RawComment { kind: block_kind(&b[range.clone()]), range });
                    mode = Mode::Code;
                    i += 2;
                    continue;
                }
                blank(&mut masked, i);
            }
        }
        i += 1;
    }
    match mode {
        Mode::LineComment => comments.push(RawComment { range: start..b.len(), kind: RawCommentKind::Line }),
        Mode::BlockComment => {
            let range = start..b.len();
            comments.push(RawComment { kind: block_kind(&b[range.clone()]), range });
        }
        _ => {}
    }
    (comments, masked)
}

fn block_kind(text: &[u8]) -> RawCommentKind {
    // `/**/` is an empty block comment, not a Javadoc.
    if text.starts_with(b"/**") && text != b"/**/" {
        RawCommentKind::Javadoc
    } else {
        RawCommentKind::Block
    }
}

/// Comment text with delimiters, per-line leading asterisks and surrounding
/// blank lines removed.
pub fn strip_delimiters(raw: &str) -> String {
    if let Some(rest) = raw.strip_prefix("//") {
        return rest.trim().to_string();
    }
    let inner = raw.strip_prefix("/**").filter(|_| raw != "/**/").or_else(|| raw.strip_prefix("/*")).unwrap_or(raw);
    let inner = inner.strip_suffix("*/").unwrap_or(inner);
    let lines: Vec<String> = inner
        .lines()
        .map(|l| {
            let t = l.trim_start();
            let t = t.strip_prefix('*').map(|r| r.strip_prefix(' ').unwrap_or(r)).unwrap_or(t);
            t.trim_end().to_string()
        })
        .collect();
    let first = lines.iter().position(|l| !l.is_empty());
    let last = lines.iter().rposition(|l| !l.is_empty());
    match (first, last) {
        (Some(f), Some(l)) => lines[f..=l].join("\n"),
        _ => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Type,
    Method(usize),
    Other,
}

#[derive(Debug, Clone)]
struct MethodBody {
    /// Byte range between the braces.
    body: Range<usize>,
    lines: (usize, usize),
}

struct LineIndex(Vec<usize>);

impl LineIndex {
    fn new(src: &[u8]) -> Self {
        let mut starts = vec![0];
        starts.extend(src.iter().enumerate().filter(|(_, &c)| c == b'\n').map(|(i, _)| i + 1));
        Self(starts)
    }

    fn line_of(&self, offset: usize) -> usize {
        self.0.partition_point(|&s| s <= offset)
    }
}

fn is_ident_byte(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$' || c >= 0x80
}

/// Identifier-like words of a masked header, in order.
fn words(header: &[u8]) -> Vec<&str> {
    header
        .split(|&c| !is_ident_byte(c))
        .filter(|w| !w.is_empty())
        .filter_map(|w| std::str::from_utf8(w).ok())
        .collect()
}

const TYPE_KEYWORDS: [&str; 4] = ["class", "interface", "enum", "record"];

fn type_name(header: &[u8]) -> Option<String> {
    let ws = words(header);
    let pos = ws.iter().position(|w| TYPE_KEYWORDS.contains(w))?;
    Some(ws.get(pos + 1).map(|s| s.to_string()).unwrap_or_default())
}

/// Name of the method/constructor declared by `header`, if it looks like one:
/// `... name(params) [throws X]` with no assignment before the parameters.
fn method_name(header: &[u8]) -> Option<String> {
    let open = header.iter().position(|&c| c == b'(')?;
    if header[..open].contains(&b'=') {
        return None;
    }
    let before = &header[..open];
    let end = before.iter().rposition(|&c| !c.is_ascii_whitespace())? + 1;
    let start = before[..end].iter().rposition(|&c| !is_ident_byte(c)).map_or(0, |p| p + 1);
    let name = std::str::from_utf8(&before[start..end]).ok()?;
    if name.is_empty() || name.as_bytes()[0].is_ascii_digit() {
        return None;
    }
    let control = ["if", "for", "while", "switch", "catch", "synchronized", "try", "return", "new", "else", "do"];
    if control.contains(&name) {
        return None;
    }
    Some(name.to_string())
}

/// Brace structure of the masked source: method bodies in order of opening.
fn method_bodies(masked: &[u8], lines: &LineIndex) -> Vec<MethodBody> {
    let mut stack: Vec<(Scope, usize, usize)> = Vec::new(); // scope, open pos, header start
    let mut methods: Vec<MethodBody> = Vec::new();
    let mut stmt_start = 0;
    let mut paren = 0usize;
    for (i, &c) in masked.iter().enumerate() {
        match c {
            b'(' => paren += 1,
            b')' => paren = paren.saturating_sub(1),
            b';' if paren == 0 => stmt_start = i + 1,
            b'{' => {
                if paren > 0 {
                    stack.push((Scope::Other, i, stmt_start));
                    continue;
                }
                let header = &masked[stmt_start..i];
                let in_method = stack.iter().any(|(s, _, _)| matches!(s, Scope::Method(_)));
                let parent_is_type = matches!(stack.last(), Some((Scope::Type, _, _)));
                let scope = if in_method {
                    Scope::Other
                } else if type_name(header).is_some() {
                    Scope::Type
                } else if parent_is_type && !header.contains(&b'=') {
                    let trimmed: Vec<&str> = words(header);
                    let initializer = trimmed.is_empty() || trimmed == ["static"];
                    if initializer || method_name(header).is_some() {
                        let hs = header.iter().position(|c| !c.is_ascii_whitespace()).map_or(i, |p| stmt_start + p);
                        methods.push(MethodBody { body: i + 1..i + 1, lines: (lines.line_of(hs), 0) });
                        Scope::Method(methods.len() - 1)
                    } else {
                        Scope::Other
                    }
                } else {
                    Scope::Other
                };
                stack.push((scope, i, stmt_start));
                stmt_start = i + 1;
            }
            b'}' => {
                if let Some((scope, _, saved)) = stack.pop() {
                    if let Scope::Method(idx) = scope {
                        methods[idx].body.end = i;
                        methods[idx].lines.1 = lines.line_of(i);
                    }
                    if paren > 0 {
                        stmt_start = saved;
                        continue;
                    }
                }
                stmt_start = i + 1;
            }
            _ => {}
        }
    }
    // Unclosed bodies run to the end of the file.
    for m in methods.iter_mut().filter(|m| m.lines.1 == 0) {
        m.body.end = masked.len();
        m.lines.1 = lines.line_of(masked.len().saturating_sub(1));
    }
    methods
}

fn find_word(masked: &[u8], word: &[u8]) -> Option<usize> {
    let mut from = 0;
    while let Some(p) = masked[from..].windows(word.len()).position(|w| w == word) {
        let at = from + p;
        let before_ok = at == 0 || !is_ident_byte(masked[at - 1]);
        let after_ok = masked.get(at + word.len()).map_or(true, |&c| !is_ident_byte(c));
        if before_ok && after_ok {
            return Some(at);
        }
        from = at + 1;
    }
    None
}

/// The declaration a Javadoc ending at `end` documents, when only whitespace
/// and annotations separate them.
fn attached_declaration(src: &[u8], masked: &[u8], end: usize, comment_starts: &HashSet<usize>) -> Option<(CommentLevel, String)> {
    let mut p = end;
    loop {
        while p < src.len() && src[p].is_ascii_whitespace() {
            p += 1;
        }
        if p >= src.len() || comment_starts.contains(&p) {
            return None;
        }
        if src[p] == b'@' && src.get(p + 1).is_some_and(|&c| is_ident_byte(c)) && find_word(&masked[p + 1..], b"interface") != Some(0) {
            p += 1;
            while p < src.len() && (is_ident_byte(masked[p]) || masked[p] == b'.') {
                p += 1;
            }
            let mut q = p;
            while q < src.len() && masked[q].is_ascii_whitespace() {
                q += 1;
            }
            if masked.get(q) == Some(&b'(') {
                let mut depth = 0;
                while q < src.len() {
                    match masked[q] {
                        b'(' => depth += 1,
                        b')' => {
                            depth -= 1;
                            if depth == 0 {
                                q += 1;
                                break;
                            }
                        }
                        _ => {}
                    }
                    q += 1;
                }
                p = q;
            }
            continue;
        }
        break;
    }
    let mut q = p;
    let mut depth = 0usize;
    while q < masked.len() {
        match masked[q] {
            b'(' => depth += 1,
            b')' => depth = depth.saturating_sub(1),
            b'{' | b';' | b'=' if depth == 0 => break,
            _ => {}
        }
        q += 1;
    }
    let header = &masked[p..q];
    if let Some(name) = type_name(header) {
        return Some((CommentLevel::Class, name));
    }
    if masked.get(q) != Some(&b'=') {
        if let Some(name) = method_name(header) {
            return Some((CommentLevel::Method, name));
        }
    }
    None
}

/// Javadocs attached to class and method declarations anywhere in the file,
/// plus inline comments inside method bodies whose line span intersects one of
/// `changed_line_ranges` (1-based, inclusive, post-change numbering). Comments
/// that start before the `package` declaration are skipped.
pub fn extract_comments(file_path: &str, java_source: &str, changed_line_ranges: &[(usize, usize)]) -> Vec<JavaCommentSpan> {
    let src = java_source.as_bytes();
    let (comments, masked) = scan(java_source);
    let lines = LineIndex::new(src);
    let package_at = find_word(&masked, b"package");
    let methods = method_bodies(&masked, &lines);
    let starts: HashSet<usize> = comments.iter().map(|c| c.range.start).collect();
    let changed = |m: &MethodBody| changed_line_ranges.iter().any(|&(a, b)| a <= m.lines.1 && m.lines.0 <= b);

    let mut out = Vec::new();
    for c in &comments {
        if package_at.is_some_and(|p| c.range.start < p) {
            continue;
        }
        let raw = &java_source[c.range.clone()];
        let text = strip_delimiters(raw);
        if text.is_empty() {
            continue;
        }
        let enclosing = methods.iter().filter(|m| m.body.contains(&c.range.start)).min_by_key(|m| m.body.len());
        let (level, symbol) = match (enclosing, c.kind) {
            (Some(m), _) => {
                if !changed(m) {
                    continue;
                }
                (CommentLevel::Inline, String::new())
            }
            (None, RawCommentKind::Javadoc) => match attached_declaration(src, &masked, c.range.end, &starts) {
                Some(found) => found,
                None => continue,
            },
            (None, _) => continue,
        };
        out.push(JavaCommentSpan {
            file_path: file_path.to_string(),
            byte_range: (c.range.start, c.range.end),
            level,
            attached_symbol: symbol,
            text,
            line: lines.line_of(c.range.start),
        });
    }
    out
}

/// Post-change line ranges touched by each file in a unified diff. Deletions
/// mark the lines around the removal point.
pub fn changed_lines(diff: &str) -> BTreeMap<String, Vec<(usize, usize)>> {
    let mut out: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    let mut path: Option<String> = None;
    let mut new_line = 0usize;
    let mut in_hunk = false;
    let push = |out: &mut BTreeMap<String, Vec<(usize, usize)>>, path: &Option<String>, a: usize, b: usize| {
        if let Some(p) = path {
            let v = out.entry(p.clone()).or_default();
            match v.last_mut() {
                Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
                _ => v.push((a, b)),
            }
        }
    };
    for line in diff.lines() {
        if let Some(rest) = line.strip_prefix("+++ ") {
            let p = rest.trim();
            path = if p == "/dev/null" { None } else { Some(p.strip_prefix("b/").unwrap_or(p).to_string()) };
            in_hunk = false;
            continue;
        }
        if line.starts_with("--- ") && !in_hunk || line.starts_with("diff --git") {
            in_hunk = false;
            continue;
        }
        if let Some(rest) = line.strip_prefix("@@") {
            // @@ -a,b +c,d @@
            let plus = rest.split_whitespace().find(|t| t.starts_with('+'));
            new_line = plus
                .and_then(|t| t[1..].split(',').next())
                .and_then(|n| n.parse().ok())
                .unwrap_or(1);
            in_hunk = true;
            continue;
        }
        if !in_hunk {
            continue;
        }
        match line.as_bytes().first() {
            Some(b'+') => {
                push(&mut out, &path, new_line, new_line);
                new_line += 1;
            }
            Some(b'-') => {
                let a = new_line.saturating_sub(1).max(1);
                push(&mut out, &path, a, new_line.max(1));
            }
            Some(b'\\') => {}
            _ => new_line += 1,
        }
    }
    out
}

/// Group comment spans of every changed Java file into at most one artifact per
/// file and level. Adjacent `//` comments on consecutive lines form one block.
pub fn comment_artifacts(commit: &Commit, sources: &BTreeMap<String, String>) -> Result<Vec<Artifact>, CommentError> {
    let ranges = changed_lines(&commit.diff);
    let mut out = Vec::new();
    for file in commit.changed_files.iter().filter(|f| f.is_java()) {
        let src = sources.get(&file.path).ok_or_else(|| CommentError::MissingSource(file.path.clone()))?;
        let changed = ranges.get(&file.path).map(Vec::as_slice).unwrap_or(&[]);
        let spans = extract_comments(&file.path, src, changed);
        for (level, kind) in [
            (CommentLevel::Class, ArtifactKind::ClassJavadoc),
            (CommentLevel::Method, ArtifactKind::MethodJavadoc),
            (CommentLevel::Inline, ArtifactKind::InlineComment),
        ] {
            let blocks = blocks_for(src, spans.iter().filter(|s| s.level == level));
            if !blocks.is_empty() {
                out.push(Artifact::new(ArtifactRef::new(kind, file.path.clone(), ""), "", blocks));
            }
        }
    }
    Ok(out)
}

fn blocks_for<'a>(src: &str, spans: impl Iterator<Item = &'a JavaCommentSpan>) -> Vec<BodyBlock> {
    let mut blocks: Vec<BodyBlock> = Vec::new();
    let mut prev: Option<&JavaCommentSpan> = None;
    for s in spans {
        let is_line = src[s.byte_range.0..].starts_with("//");
        let joins = prev.is_some_and(|p| {
            src[p.byte_range.0..].starts_with("//")
                && is_line
                && src[p.byte_range.1..s.byte_range.0].trim().is_empty()
                && src[p.byte_range.1..s.byte_range.0].matches('\n').count() == 1
        });
        if joins {
            let last = blocks.last_mut().expect("previous block");
            last.text.push('\n');
            last.text.push_str(&s.text);
        } else {
            blocks.push(BodyBlock::text(s.text.clone()));
        }
        prev = Some(s);
    }
    blocks
}
