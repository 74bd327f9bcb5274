use std::sync::OnceLock;

use regex::Regex;

use super::{quote_segments, Block, IRFunction, IRModule, NormalizationConfig};

/// Linkage-, visibility- and preemption-class keywords dropped from define/declare lines.
pub(crate) const SIGNATURE_KEYWORDS: &[&str] = &[
    "dso_local",
    "dso_preemptable",
    "local_unnamed_addr",
    "unnamed_addr",
    "hidden",
    "protected",
    "noundef",
    "comdat",
];

/// Top-level directives that only describe the compilation, not the code.
const DIRECTIVE_PREFIXES: &[&str] = &["source_filename", "target datalayout", "target triple"];

/// Intrinsics whose only operands are metadata.
const METADATA_INTRINSICS: &[&str] = &["@llvm.dbg.", "@llvm.experimental.noalias.scope.decl"];

fn metadata_attachment() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // `, !dbg !12`, `, !range !4`, `!dbg !7` on define lines, `!{}` literals.
    RE.get_or_init(|| Regex::new(r",?\s*![A-Za-z_.][-\w.]*\s+!(?:\d+|\{[^}]*\})").unwrap())
}

fn attribute_ref() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s+#\d+\b").unwrap())
}

fn signature_noise() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let words = SIGNATURE_KEYWORDS.join("|");
        Regex::new(&format!(r"\s+(?:(?:{words})\b(?:\(\$?[-\w.]*\))?|align\s+\d+)")).unwrap()
    })
}

/// Removes comments, debug metadata, attributes and header/footer directives.
/// Instruction text outside those spans is left untouched.
pub fn strip_noise(m: &IRModule, cfg: &NormalizationConfig) -> IRModule {
    IRModule {
        header_lines: strip_top_level(&m.header_lines, cfg),
        functions: m.functions.iter().map(|f| strip_function(f, cfg)).collect(),
        footer_lines: strip_top_level(&m.footer_lines, cfg),
    }
}

fn strip_function(f: &IRFunction, cfg: &NormalizationConfig) -> IRFunction {
    let mut signature = strip_line(&f.signature_line, cfg);
    if cfg.strip_attributes {
        signature = apply_unquoted(&signature, |s| signature_noise().replace_all(s, "").into_owned());
    }
    let blocks = f
        .blocks
        .iter()
        .map(|b| Block {
            label: b.label.clone(),
            label_line: b.label_line.as_ref().map(|l| strip_line(l, cfg)),
            lines: b
                .lines
                .iter()
                .filter(|l| !(cfg.strip_debug && is_metadata_intrinsic(l)))
                .map(|l| strip_line(l, cfg))
                .filter(|l| !l.trim().is_empty())
                .collect(),
        })
        .filter(|b| b.label.is_some() || !b.lines.is_empty())
        .collect();
    IRFunction {
        preceding_lines: strip_top_level(&f.preceding_lines, cfg),
        symbol: f.symbol.clone(),
        signature_line: signature,
        blocks,
        closing_line: f.closing_line.trim_end().to_string(),
    }
}

fn strip_top_level(lines: &[String], cfg: &NormalizationConfig) -> Vec<String> {
    lines
        .iter()
        .filter(|l| {
            let t = l.trim_start();
            let directive = DIRECTIVE_PREFIXES.iter().any(|p| t.starts_with(p))
                || t.starts_with("attributes #")
                || (t.starts_with('$') && t.contains("= comdat"));
            let metadata = t.starts_with('!');
            !(cfg.strip_attributes && directive) && !(cfg.strip_debug && metadata)
        })
        .map(|l| {
            let mut s = strip_line(l, cfg);
            if cfg.strip_attributes && s.trim_start().starts_with("declare ") {
                s = apply_unquoted(&s, |seg| signature_noise().replace_all(seg, "").into_owned());
            }
            s
        })
        .filter(|l| !l.trim().is_empty())
        .collect()
}

/// Comment, metadata-attachment and attribute-reference removal for one line.
pub(crate) fn strip_line(line: &str, cfg: &NormalizationConfig) -> String {
    let mut out = line.to_string();
    if cfg.strip_comments {
        out = remove_comment(&out);
    }
    if cfg.strip_debug {
        out = apply_unquoted(&out, |s| metadata_attachment().replace_all(s, "").into_owned());
    }
    if cfg.strip_attributes {
        out = apply_unquoted(&out, |s| attribute_ref().replace_all(s, "").into_owned());
    }
    if out.len() != line.len() {
        out.truncate(out.trim_end().len());
    }
    out
}

fn remove_comment(line: &str) -> String {
    let mut end = line.len();
    let mut offset = 0;
    for (seg, quoted) in quote_segments(line) {
        if !quoted {
            if let Some(pos) = seg.find(';') {
                end = offset + pos;
                break;
            }
        }
        offset += seg.len();
    }
    line[..end].trim_end().to_string()
}

fn apply_unquoted(line: &str, f: impl Fn(&str) -> String) -> String {
    quote_segments(line)
        .into_iter()
        .map(|(seg, quoted)| if quoted { seg.to_string() } else { f(seg) })
        .collect()
}

fn is_metadata_intrinsic(line: &str) -> bool {
    let t = line.trim_start();
    (t.starts_with("call ") || t.starts_with("tail call ") || t.contains("= call "))
        && METADATA_INTRINSICS.iter().any(|p| t.contains(p))
}
