//! Extraction of `Title:` / `Abstract:` sections from free-form completions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Title,
    Abstract,
}

const DECORATION: &[char] = &['*', '_', '#', '>', '`', '"', '\'', '“', '”'];

/// Drops list numbering such as `1.`, `2)`, `(3)` and bullets.
fn strip_numbering(s: &str) -> &str {
    let s = s.trim_start();
    let s = s.strip_prefix(['-', '•']).map_or(s, str::trim_start);
    let inner = s.strip_prefix('(').unwrap_or(s);
    let digits = inner.len() - inner.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let after = &inner[digits..];
        if let Some(rest) = after.strip_prefix(['.', ')', ':']) {
            return rest.trim_start();
        }
    }
    s
}

fn trim_decoration(s: &str) -> &str {
    s.trim().trim_matches(DECORATION).trim()
}

/// Recognizes a marker at the start of a line and returns the remainder.
fn marker(line: &str) -> Option<(Marker, &str)> {
    let s = strip_numbering(line.trim_start().trim_start_matches(DECORATION));
    let s = s.trim_start_matches(DECORATION).trim_start();
    for (word, m) in [("title", Marker::Title), ("abstract", Marker::Abstract)] {
        if s.len() >= word.len() && s.is_char_boundary(word.len()) && s[..word.len()].eq_ignore_ascii_case(word) {
            let rest = s[word.len()..].trim_start_matches(DECORATION).trim_start();
            if let Some(rest) = rest.strip_prefix(':') {
                return Some((m, rest.trim_start_matches(DECORATION).trim()));
            }
        }
    }
    None
}

/// A short line such as `2. Genetic Algorithms` or `**Paper 3**` that
/// introduces the next sample in a multi-sample completion.
fn is_heading(line: &str) -> bool {
    let t = line.trim();
    let numbered = strip_numbering(t).len() != t.len();
    let emphasized = t.len() > 4 && t.starts_with("**") && t.ends_with("**");
    (numbered || emphasized || t.starts_with('#')) && t.split_whitespace().count() <= 8
}

#[derive(Default)]
struct Block {
    title: Vec<String>,
    abstract_lines: Vec<String>,
    in_abstract: bool,
    has_abstract_marker: bool,
}

impl Block {
    fn finish(self) -> Option<(String, String)> {
        let title = trim_decoration(&self.title.join(" ")).to_string();
        let abstract_text = self.abstract_lines.join("\n").trim().to_string();
        (self.has_abstract_marker && !title.is_empty() && !abstract_text.is_empty()).then_some((title, abstract_text))
    }
}

/// Every complete title/abstract pair in order of appearance.
pub fn parse_all_completions(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut current: Option<Block> = None;
    for line in text.lines() {
        match marker(line) {
            Some((Marker::Title, rest)) => {
                if let Some(done) = current.take().and_then(Block::finish) {
                    out.push(done);
                }
                let mut b = Block::default();
                if !rest.is_empty() {
                    b.title.push(rest.to_string());
                }
                current = Some(b);
            }
            Some((Marker::Abstract, rest)) => {
                if let Some(b) = current.as_mut() {
                    if b.has_abstract_marker {
                        continue;
                    }
                    b.in_abstract = true;
                    b.has_abstract_marker = true;
                    if !rest.is_empty() {
                        b.abstract_lines.push(rest.to_string());
                    }
                }
            }
            None => {
                let Some(b) = current.as_mut() else { continue };
                let t = line.trim();
                if b.in_abstract {
                    if !b.abstract_lines.is_empty() && is_heading(t) {
                        b.in_abstract = false;
                    } else if !t.is_empty() || !b.abstract_lines.is_empty() {
                        b.abstract_lines.push(t.to_string());
                    }
                } else if !b.has_abstract_marker && b.title.is_empty() && !t.is_empty() {
                    b.title.push(t.to_string());
                }
            }
        }
    }
    if let Some(done) = current.and_then(Block::finish) {
        out.push(done);
    }
    out
}

/// Extracts the first title and abstract from a completion.
pub fn parse_completion(text: &str) -> Result<(String, String)> {
    if let Some(first) = parse_all_completions(text).into_iter().next() {
        return Ok(first);
    }
    let has = |m: Marker| text.lines().any(|l| marker(l).is_some_and(|(x, _)| x == m));
    let reason = match (has(Marker::Title), has(Marker::Abstract)) {
        (false, false) => "no `Title:` or `Abstract:` marker",
        (false, true) => "no `Title:` marker",
        (true, false) => "no `Abstract:` marker",
        (true, true) => "empty title or abstract",
    };
    Err(Error::MalformedCompletion(reason.to_string()))
}
