//! Cleaning of platform comment bodies before segmentation.

/// Remove fenced code blocks, HTML comments and block-quoted diff hunks.
/// Other block quotes keep their text with the `>` markers dropped. Inline
/// code spans are left untouched. Line endings are normalized to `\n`.
pub fn clean_markdown(text: &str) -> String {
    let text = strip_html_comments(&text.replace("\r\n", "\n"));
    let mut out: Vec<&str> = Vec::new();
    let mut quote: Vec<&str> = Vec::new();
    let mut fence: Option<(char, usize)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        if let Some((ch, len)) = fence {
            if fence_marker(trimmed).is_some_and(|(c, l)| c == ch && l >= len) && trimmed.trim_start_matches(ch).trim().is_empty() {
                fence = None;
            }
            continue;
        }
        if let Some(marker) = fence_marker(trimmed) {
            flush_quote(&mut quote, &mut out);
            fence = Some(marker);
            continue;
        }
        if trimmed.starts_with('>') {
            quote.push(line);
            continue;
        }
        flush_quote(&mut quote, &mut out);
        out.push(line);
    }
    flush_quote(&mut quote, &mut out);
    let joined = out.iter().map(|l| l.trim_end()).collect::<Vec<_>>().join("\n");
    collapse_blank_lines(joined.trim())
}

fn fence_marker(line: &str) -> Option<(char, usize)> {
    let ch = line.chars().next().filter(|c| *c == '`' || *c == '~')?;
    let len = line.chars().take_while(|c| *c == ch).count();
    (len >= 3).then_some((ch, len))
}

fn unquote(line: &str) -> &str {
    let t = line.trim_start().trim_start_matches('>');
    t.strip_prefix(' ').unwrap_or(t)
}

/// A quote run is a diff hunk when it carries an `@@` header or every
/// non-blank line starts with a diff marker.
fn is_diff_quote(lines: &[&str]) -> bool {
    let inner: Vec<&str> = lines.iter().map(|l| unquote(l)).filter(|l| !l.trim().is_empty()).collect();
    inner.iter().any(|l| l.starts_with("@@"))
        || (!inner.is_empty() && inner.iter().all(|l| l.starts_with('+') || l.starts_with('-')) && inner.len() > 1)
}

fn flush_quote<'a>(quote: &mut Vec<&'a str>, out: &mut Vec<&'a str>) {
    if quote.is_empty() {
        return;
    }
    if !is_diff_quote(quote) {
        out.extend(quote.iter().map(|l| unquote(l)));
        out.push("");
    }
    quote.clear();
}

fn strip_html_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("<!--") {
        out.push_str(&rest[..start]);
        match rest[start + 4..].find("-->") {
            Some(end) => rest = &rest[start + 4 + end + 3..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

fn collapse_blank_lines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut blank = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            blank += 1;
            continue;
        }
        if !out.is_empty() {
            out.push_str(if blank > 0 { "\n\n" } else { "\n" });
        }
        blank = 0;
        out.push_str(line);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_code_removed_inline_kept() {
        let src = "Use `foo()` here.\n\n```java\nint x = 1; // #12\n```\nAfter.";
        assert_eq!(clean_markdown(src), "Use `foo()` here.\n\nAfter.");
    }

    #[test]
    fn unterminated_fence_drops_the_rest() {
        assert_eq!(clean_markdown("Intro.\n~~~\ncode\nmore"), "Intro.");
    }

    #[test]
    fn diff_quotes_removed_prose_quotes_kept() {
        let src = "> @@ -1,2 +1,2 @@\n> -old\n> +new\n\nWhy this?\n\n> You said it was slow.\nIt is.";
        assert_eq!(clean_markdown(src), "Why this?\n\nYou said it was slow.\n\nIt is.");
    }

    #[test]
    fn html_comments_removed() {
        assert_eq!(clean_markdown("<!-- template\nhint -->Body text."), "Body text.");
    }

    #[test]
    fn crlf_normalized() {
        assert_eq!(clean_markdown("a\r\nb\r\n"), "a\nb");
    }
}
