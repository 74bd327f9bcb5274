//! Standalone-function extraction by signature matching and brace balancing.
//!
//! The scanner understands comments, string/char literals and preprocessor
//! lines well enough to find balanced top-level `{ … }` items; each item's
//! header decides whether it is a free function, a container to descend into
//! (namespaces, modules, Java classes) or something to skip.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use super::{FunctionRecord, Provenance};
use crate::lang::{LanguageTag, SourceLang};

/// Returns the free functions of `text`, in file order.
///
/// Methods, nested functions and unbalanced fragments are not returned; for
/// Java, where every function lives in a class, `static` methods count as free.
pub fn extract_functions(text: &str, language: LanguageTag, path: &Path) -> Vec<FunctionRecord> {
    let LanguageTag::Source(lang) = language else {
        return Vec::new();
    };
    let scan = Scanner { b: text.as_bytes(), lang };
    let mut spans = Vec::new();
    scan.collect(0, text.len(), &mut spans);
    spans
        .into_iter()
        .map(|(start, end)| {
            let prov = Provenance {
                path: path.to_path_buf(),
                start,
                end,
            };
            FunctionRecord::new(language, text[start..end].to_string(), prov)
        })
        .collect()
}

#[derive(Debug, PartialEq, Eq)]
enum Kind {
    Function,
    Container,
    Other,
}

struct Scanner<'a> {
    b: &'a [u8],
    lang: SourceLang,
}

impl Scanner<'_> {
    fn collect(&self, lo: usize, hi: usize, out: &mut Vec<(usize, usize)>) {
        let b = self.b;
        let mut i = lo;
        let mut stmt = lo;
        while i < hi {
            if let Some(j) = self.skip_literal(i, hi) {
                i = j;
                continue;
            }
            match b[i] {
                b';' | b'}' => {
                    i += 1;
                    stmt = i;
                }
                b'#' if self.lang == SourceLang::Cpp && self.at_line_start(i) => {
                    i = self.line_end(i, hi);
                    stmt = i;
                }
                b'{' => {
                    let Some(close) = self.matching(i, hi) else {
                        return;
                    };
                    let start = self.skip_trivia(stmt, i);
                    let header = String::from_utf8_lossy(&b[start..i]);
                    match classify(self.lang, &header) {
                        Kind::Function => out.push((start, close + 1)),
                        Kind::Container => self.collect(i + 1, close, out),
                        Kind::Other => {}
                    }
                    i = close + 1;
                    stmt = i;
                }
                _ => i += 1,
            }
        }
    }

    fn at_line_start(&self, i: usize) -> bool {
        self.b[..i].iter().rev().take_while(|&&c| c != b'\n').all(|c| c.is_ascii_whitespace())
    }

    /// End of a preprocessor line, following backslash continuations.
    fn line_end(&self, mut i: usize, hi: usize) -> usize {
        while i < hi {
            if self.b[i] == b'\n' && (i == 0 || self.b[i - 1] != b'\\') {
                return i + 1;
            }
            i += 1;
        }
        hi
    }

    /// Skips whitespace and comments.
    fn skip_trivia(&self, mut i: usize, hi: usize) -> usize {
        loop {
            while i < hi && self.b[i].is_ascii_whitespace() {
                i += 1;
            }
            if self.b[i..hi].starts_with(b"//") || self.b[i..hi].starts_with(b"/*") {
                i = self.skip_literal(i, hi).unwrap_or(hi);
            } else {
                return i;
            }
        }
    }

    /// Index of the `}` matching the `{` at `open`.
    fn matching(&self, open: usize, hi: usize) -> Option<usize> {
        let mut depth = 0usize;
        let mut i = open;
        while i < hi {
            if let Some(j) = self.skip_literal(i, hi) {
                i = j;
                continue;
            }
            match self.b[i] {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            }
            i += 1;
        }
        None
    }

    /// If a comment or literal starts at `i`, returns the index just past it.
    fn skip_literal(&self, i: usize, hi: usize) -> Option<usize> {
        let b = &self.b[..hi];
        let rest = &b[i..];
        if rest.starts_with(b"//") {
            return Some(b[i..].iter().position(|&c| c == b'\n').map_or(hi, |p| i + p + 1));
        }
        if rest.starts_with(b"/*") {
            return Some(find(b, i + 2, b"*/").map_or(hi, |p| p + 2));
        }
        let prev_ident = i > 0 && (b[i - 1].is_ascii_alphanumeric() || b[i - 1] == b'_');
        match (self.lang, rest[0]) {
            (_, b'"') => Some(quoted(b, i, b'"')),
            (SourceLang::Go, b'`') => Some(find(b, i + 1, b"`").map_or(hi, |p| p + 1)),
            (SourceLang::Rust, b'\'') => Some(rust_quote(b, i)),
            (_, b'\'') => Some(quoted(b, i, b'\'')),
            (SourceLang::Rust, b'r') if !prev_ident => {
                let hashes = rest[1..].iter().take_while(|&&c| c == b'#').count();
                if rest.get(1 + hashes) != Some(&b'"') {
                    return None;
                }
                let mut close = vec![b'"'];
                close.extend(std::iter::repeat_n(b'#', hashes));
                Some(find(b, i + 2 + hashes, &close).map_or(hi, |p| p + close.len()))
            }
            (SourceLang::Cpp, b'R') if !prev_ident && rest.get(1) == Some(&b'"') => {
                let paren = rest.iter().position(|&c| c == b'(')?;
                let delim = &rest[2..paren];
                let mut close = vec![b')'];
                close.extend_from_slice(delim);
                close.push(b'"');
                Some(find(b, i + paren + 1, &close).map_or(hi, |p| p + close.len()))
            }
            _ => None,
        }
    }
}

fn find(b: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if from > b.len() {
        return None;
    }
    b[from..].windows(needle.len()).position(|w| w == needle).map(|p| from + p)
}

/// Skips a quoted literal with backslash escapes; stops at end of line for
/// unterminated literals.
fn quoted(b: &[u8], i: usize, q: u8) -> usize {
    let mut j = i + 1;
    while j < b.len() {
        match b[j] {
            b'\\' => j += 2,
            c if c == q => return j + 1,
            b'\n' if q == b'\'' => return j,
            _ => j += 1,
        }
    }
    b.len()
}

/// A Rust `'` starts either a char literal or a lifetime/label.
fn rust_quote(b: &[u8], i: usize) -> usize {
    match b.get(i + 1) {
        Some(b'\\') => quoted(b, i, b'\''),
        Some(_) => {
            // A char literal closes after one (possibly multi-byte) character.
            let ch_len = std::str::from_utf8(&b[i + 1..b.len().min(i + 5)])
                .or_else(|e| std::str::from_utf8(&b[i + 1..i + 1 + e.valid_up_to()]))
                .ok()
                .and_then(|s| s.chars().next())
                .map_or(1, char::len_utf8);
            if b.get(i + 1 + ch_len) == Some(&b'\'') {
                i + 2 + ch_len
            } else {
                i + 1
            }
        }
        None => i + 1,
    }
}

static CPP_CONTAINER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"^(?:inline\s+)?(?:namespace\b|extern\s+"C(?:\+\+)?"\s*$)"#).unwrap());
static CPP_TYPE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:typedef\s+)?(?:class|struct|union|enum)\b").unwrap());
static CPP_TAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:\s*(?:const|volatile|noexcept(?:\s*\([^)]*\))?|override|final|&&?)|\s*->[^{;]+)*\s*$").unwrap());
static RUST_ATTR_VIS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^pub(?:\s*\([^)]*\))?\s+").unwrap());
static RUST_MOD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^mod\s+[A-Za-z_]\w*\s*$").unwrap());
static RUST_FN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^(?:(?:const|async|unsafe|default|extern(?:\s+"[^"]*")?)\s+)*fn\s+[A-Za-z_]\w*"#).unwrap());
static GO_FN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^func\s+[A-Za-z_]\w*\s*[\[(]").unwrap());
static JAVA_CONTAINER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(?:class|interface|enum|record)\s+[A-Za-z_]\w*").unwrap());
static JAVA_TAIL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:throws\s+[\w.,\s]+)?$").unwrap());
static JAVA_STATIC: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bstatic\b").unwrap());

const NOT_FUNCTIONS: &[&str] = &[
    "if", "for", "while", "switch", "catch", "return", "sizeof", "decltype", "do", "else", "try", "new", "synchronized",
];

fn classify(lang: SourceLang, header: &str) -> Kind {
    let h = header.trim();
    match lang {
        SourceLang::Cpp => {
            let h = strip_balanced_prefix(h, "template", b'<', b'>');
            if CPP_CONTAINER.is_match(h) {
                Kind::Container
            } else if CPP_TYPE.is_match(h) {
                Kind::Other
            } else if c_like_function(h, &CPP_TAIL, true) {
                Kind::Function
            } else {
                Kind::Other
            }
        }
        SourceLang::Rust => {
            let mut h = h;
            loop {
                let next = strip_balanced_prefix(strip_balanced_prefix(h, "#", b'[', b']'), "#!", b'[', b']');
                if next.len() == h.len() {
                    break;
                }
                h = next;
            }
            let h = RUST_ATTR_VIS.find(h).map_or(h, |m| &h[m.end()..]);
            if RUST_MOD.is_match(h) {
                Kind::Container
            } else if RUST_FN.is_match(h) {
                Kind::Function
            } else {
                Kind::Other
            }
        }
        SourceLang::Go => {
            if GO_FN.is_match(h) {
                Kind::Function
            } else {
                Kind::Other
            }
        }
        SourceLang::Java => {
            let paren = h.find('(').unwrap_or(h.len());
            if JAVA_CONTAINER.is_match(&h[..paren]) {
                Kind::Container
            } else if JAVA_STATIC.is_match(&h[..paren]) && c_like_function(h, &JAVA_TAIL, false) {
                Kind::Function
            } else {
                Kind::Other
            }
        }
    }
}

/// `[prefix]<open>…<close>` with nesting, removed along with trailing whitespace.
fn strip_balanced_prefix<'a>(h: &'a str, prefix: &str, open: u8, close: u8) -> &'a str {
    let Some(rest) = h.strip_prefix(prefix) else {
        return h;
    };
    let rest = rest.trim_start();
    let b = rest.as_bytes();
    if b.first() != Some(&open) {
        return h;
    }
    let mut depth = 0;
    for (i, &c) in b.iter().enumerate() {
        if c == open {
            depth += 1;
        } else if c == close {
            depth -= 1;
            if depth == 0 {
                return rest[i + 1..].trim_start();
            }
        }
    }
    h
}

/// `<type> name(params) <tail>` where `name` is a plain identifier.
fn c_like_function(h: &str, tail: &Regex, reject_qualified: bool) -> bool {
    let Some(open) = h.find('(') else {
        return false;
    };
    let before = h[..open].trim_end();
    if before.contains('=') {
        return false;
    }
    let name_start = before
        .rfind(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == ':' || c == '~'))
        .map_or(0, |p| p + 1);
    let name = &before[name_start..];
    let ret = before[..name_start].trim();
    if name.is_empty() || ret.is_empty() || name.starts_with(|c: char| c.is_ascii_digit()) {
        return false;
    }
    if NOT_FUNCTIONS.contains(&name) || name.contains("operator") || (reject_qualified && name.contains("::")) {
        return false;
    }
    let mut depth = 0;
    let mut close = None;
    for (i, c) in h[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    close = Some(open + i);
                    break;
                }
            }
            _ => {}
        }
    }
    close.is_some_and(|c| tail.is_match(&h[c + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(text: &str, lang: SourceLang) -> Vec<String> {
        extract_functions(text, LanguageTag::Source(lang), Path::new("x"))
            .into_iter()
            .map(|r| r.source)
            .collect()
    }

    #[test]
    fn cpp_skips_classes_and_qualified_definitions() {
        let text = "#include <x>\n#define M { \\\n }\nstruct S { int f() { return 1; } };\nint S::g() { return 2; }\n// int h() {\nstatic int h(const char* s = \"}\") { return '}'; }\n";
        assert_eq!(spans(text, SourceLang::Cpp), vec!["static int h(const char* s = \"}\") { return '}'; }"]);
    }

    #[test]
    fn cpp_descends_into_namespaces_and_keeps_templates() {
        let text = "namespace a { template <typename T> T id(T x) { return x; } }\nauto f = [](int x) { return x; };\nint main() { return 0; }";
        assert_eq!(spans(text, SourceLang::Cpp), vec!["template <typename T> T id(T x) { return x; }", "int main() { return 0; }"]);
    }

    #[test]
    fn rust_handles_lifetimes_and_raw_strings() {
        let text = "use std::{a, b};\nimpl X { fn m(&self) {} }\n#[inline]\npub fn f<'a>(s: &'a str) -> char { let _ = r#\"}\"#; '{' }\nmod inner { fn g() { fn nested() {} } }\n";
        assert_eq!(
            spans(text, SourceLang::Rust),
            vec!["#[inline]\npub fn f<'a>(s: &'a str) -> char { let _ = r#\"}\"#; '{' }", "fn g() { fn nested() {} }"]
        );
    }

    #[test]
    fn go_excludes_receivers() {
        let text = "package main\nfunc (t T) M() int { return 1 }\nfunc F(x int) int { s := `}`; return x }\n";
        assert_eq!(spans(text, SourceLang::Go), vec!["func F(x int) int { s := `}`; return x }"]);
    }

    #[test]
    fn java_keeps_static_methods() {
        let text = "public class A {\n  static int f(int x) throws Exception { return x; }\n  int g() { return 0; }\n}\n";
        assert_eq!(spans(text, SourceLang::Java), vec!["static int f(int x) throws Exception { return x; }"]);
    }

    #[test]
    fn unbalanced_tail_is_dropped() {
        assert_eq!(spans("int f() { return 1; }\nint g() { if (x) {", SourceLang::Cpp), vec!["int f() { return 1; }"]);
        assert!(spans("", SourceLang::Cpp).is_empty());
    }

    #[test]
    fn provenance_spans_index_the_file() {
        let text = "\n\nint f() { return 1; }\n";
        let recs = extract_functions(text, LanguageTag::Source(SourceLang::Cpp), Path::new("a.cpp"));
        assert_eq!(&text[recs[0].provenance.start..recs[0].provenance.end], recs[0].source);
        assert_eq!(recs[0].provenance.start, 2);
    }
}
