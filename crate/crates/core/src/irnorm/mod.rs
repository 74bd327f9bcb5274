//! Textual LLVM IR parsing and normalization.
//!
//! Normalization turns frontend output into the compact form used for training:
//! header/footer directives, attributes, debug metadata and comments are stripped,
//! mangled symbols are demangled, and block labels (optionally also unnamed
//! temporaries) are renamed deterministically. The pipeline is line-structured and
//! never needs a full IR grammar.

mod canon;
mod demangle;
mod parse;
mod strip;

pub use canon::{canonicalize, check_label_closure};
pub use demangle::{demangle_itanium, demangle_symbols, DemangleFailure};
pub use parse::parse_ir;
pub use strip::strip_noise;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IrError {
    #[error("malformed IR at line {line}: {reason}")]
    MalformedIR { line: usize, reason: String },
    #[error("function `{function}` references undefined label `{label}`")]
    DanglingLabel { function: String, label: String },
    #[error("demangler failed on `{symbol}`: {reason}")]
    DemanglerFailure { symbol: String, reason: String },
}

/// A parsed module. Lines are kept verbatim so that serialization reproduces the input.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IRModule {
    /// Top-level lines before the first function (module comment, target directives, globals).
    pub header_lines: Vec<String>,
    pub functions: Vec<IRFunction>,
    /// Top-level lines after the last function (declarations, attribute groups, metadata).
    pub footer_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IRFunction {
    /// Top-level lines between the previous function (or the header) and this one.
    pub preceding_lines: Vec<String>,
    /// Symbol name without the `@` sigil and without quotes.
    pub symbol: String,
    pub signature_line: String,
    pub blocks: Vec<Block>,
    pub closing_line: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    /// `None` for an unlabeled entry block.
    pub label: Option<String>,
    /// The raw label line, e.g. `2:    ; preds = %1`.
    pub label_line: Option<String>,
    pub lines: Vec<String>,
}

/// Switches for the normalization passes. Everything is enabled by default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    /// Remove `;` comments (including `; ModuleID` and `; preds` annotations).
    pub strip_comments: bool,
    /// Remove metadata attachments, metadata definitions and metadata-only intrinsic calls.
    pub strip_debug: bool,
    /// Remove attribute groups and `#N` references, linkage/visibility keywords,
    /// signature alignment, comdats and the target/source-file directives.
    pub strip_attributes: bool,
    pub canonicalize_blocks: bool,
    pub canonicalize_temporaries: bool,
    pub demangle: bool,
    /// Shell command template with a `{sym}` placeholder; when set it replaces the
    /// built-in Itanium decoder.
    pub demangler_command: Option<String>,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            strip_comments: true,
            strip_debug: true,
            strip_attributes: true,
            canonicalize_blocks: true,
            canonicalize_temporaries: true,
            demangle: true,
            demangler_command: None,
        }
    }
}

impl IRModule {
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &str| {
            out.push_str(line);
            out.push('\n');
        };
        self.header_lines.iter().for_each(|l| push(l));
        for f in &self.functions {
            f.preceding_lines.iter().for_each(|l| push(l));
            push(&f.signature_line);
            for b in &f.blocks {
                if let Some(l) = &b.label_line {
                    push(l);
                }
                b.lines.iter().for_each(|l| push(l));
            }
            push(&f.closing_line);
        }
        self.footer_lines.iter().for_each(|l| push(l));
        out
    }

    pub fn function(&self, symbol: &str) -> Option<&IRFunction> {
        self.functions.iter().find(|f| f.symbol == symbol)
    }
}

impl IRFunction {
    pub fn instruction_lines(&self) -> impl Iterator<Item = &String> {
        self.blocks.iter().flat_map(|b| b.lines.iter())
    }
}

/// Result of the full pipeline, with any symbols the demangler gave up on.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub text: String,
    pub demangle_failures: Vec<DemangleFailure>,
}

/// parse → strip → demangle → canonicalize → serialize.
pub fn normalize(text: &str, cfg: &NormalizationConfig) -> Result<String, IrError> {
    normalize_detailed(text, cfg).map(|n| n.text)
}

pub fn normalize_detailed(text: &str, cfg: &NormalizationConfig) -> Result<Normalized, IrError> {
    let module = parse_ir(text)?;
    let module = strip_noise(&module, cfg);
    let (module, failures) = demangle_symbols(&module, cfg);
    for f in &failures {
        log::debug!("demangle: keeping `{}` ({})", f.symbol, f.reason);
    }
    let module = canonicalize(&module, cfg)?;
    Ok(Normalized {
        text: module.serialize(),
        demangle_failures: failures,
    })
}

/// Splits a line into (segment, is_quoted) pieces. Quoted pieces include their quotes.
/// LLVM string literals escape `"` as `\22`, so a plain toggle is exact.
pub(crate) fn quote_segments(line: &str) -> Vec<(&str, bool)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_quote = false;
    for (i, ch) in line.char_indices() {
        if ch == '"' {
            if in_quote {
                out.push((&line[start..=i], true));
                start = i + 1;
            } else {
                if start < i {
                    out.push((&line[start..i], false));
                }
                start = i;
            }
            in_quote = !in_quote;
        }
    }
    if start < line.len() {
        out.push((&line[start..], in_quote));
    }
    out
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '$' | '.' | '_')
}

/// Reads an identifier body right after a `%` or `@` sigil: either a quoted name
/// (returned with its quotes) or a bare name. Returns the byte length consumed.
pub(crate) fn read_ident(rest: &str) -> Option<usize> {
    if let Some(stripped) = rest.strip_prefix('"') {
        stripped.find('"').map(|end| end + 2)
    } else {
        let n: usize = rest
            .chars()
            .take_while(|&c| is_ident_char(c))
            .map(char::len_utf8)
            .sum();
        (n > 0).then_some(n)
    }
}

/// Rewrites every `sigil`-prefixed identifier outside string literals through `f`.
/// `f` receives the identifier body (quoted names keep their quotes) and returns a
/// replacement body, or `None` to keep it.
pub(crate) fn rewrite_idents(line: &str, sigil: char, mut f: impl FnMut(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(line.len());
    let bytes = line.as_bytes();
    let mut i = 0;
    let mut in_quote = false;
    while i < line.len() {
        let ch = line[i..].chars().next().unwrap();
        if ch == '"' {
            in_quote = !in_quote;
        }
        // `c"..."` string constants are opaque; a sigil directly before a quote starts a quoted name.
        if !in_quote && ch == sigil {
            let rest = &line[i + 1..];
            let prev_is_ident = i > 0 && is_ident_char(bytes[i - 1] as char);
            if !prev_is_ident {
                if let Some(len) = read_ident(rest) {
                    let body = &rest[..len];
                    out.push(sigil);
                    match f(body) {
                        Some(rep) => out.push_str(&rep),
                        None => out.push_str(body),
                    }
                    i += 1 + len;
                    continue;
                }
            }
        }
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// All identifiers with the given sigil, outside string literals.
pub(crate) fn idents(line: &str, sigil: char) -> Vec<String> {
    let mut found = Vec::new();
    rewrite_idents(line, sigil, |body| {
        found.push(body.to_string());
        None
    });
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ident_scanning_skips_strings() {
        let line = r#"  %3 = call i32 (ptr, ...) @printf(ptr @.str, i32 %x) ; "%fake""#;
        assert_eq!(idents(line, '%'), vec!["3", "x"]);
        assert_eq!(idents(line, '@'), vec!["printf", ".str"]);
        let quoted = r#"define i32 @"max(int, int)"(i32 %0)"#;
        assert_eq!(idents(quoted, '@'), vec![r#""max(int, int)""#]);
    }

    #[test]
    fn quote_segments_cover_line() {
        let line = r#"a "b;c" d"#;
        let segs = quote_segments(line);
        let joined: String = segs.iter().map(|(s, _)| *s).collect();
        assert_eq!(joined, line);
        assert_eq!(segs[1], ("\"b;c\"", true));
    }
}
