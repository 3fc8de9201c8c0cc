//! Reference lexer for Java comments, shared with the acceptance suite.

use std::ops::Range;

use rationale_forge::comment::RawCommentKind;

/// Straight-line reference lexer: walks the bytes once, consuming each
/// literal or comment with its own inner loop.
pub fn reference(src: &[u8]) -> Vec<(Range<usize>, RawCommentKind)> {
    let n = src.len();
    let at = |i: usize, pat: &[u8]| src.get(i..i + pat.len()) == Some(pat);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if at(i, b"//") {
            let end = src[i..].iter().position(|&c| c == b'\n').map_or(n, |p| i + p);
            out.push((i..end, RawCommentKind::Line));
            i = end;
        } else if at(i, b"/*") {
            let mut j = i + 2;
            while j < n && !at(j, b"*/") {
                j += 1;
            }
            let end = if j < n { j + 2 } else { n };
            let body = &src[i..end];
            let kind = if body.starts_with(b"/**") && body != b"/**/" {
                RawCommentKind::Javadoc
            } else {
                RawCommentKind::Block
            };
            out.push((i..end, kind));
            i = end;
        } else if at(i, b"\"\"\"") {
            let mut j = i + 3;
            while j < n && !at(j, b"\"\"\"") {
                j += if src[j] == b'\\' { 2 } else { 1 };
            }
            i = (j + 3).min(n);
        } else if src[i] == b'"' || src[i] == b'\'' {
            let quote = src[i];
            let mut j = i + 1;
            while j < n && src[j] != quote && src[j] != b'\n' {
                j += if src[j] == b'\\' && src.get(j + 1) != Some(&b'\n') { 2 } else { 1 };
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}
