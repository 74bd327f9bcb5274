use super::{read_ident, Block, IRFunction, IRModule, IrError};

/// Splits IR text into header, functions and footer.
///
/// A function starts at a column-0 `define` line ending in `{` and ends at a line
/// consisting of `}`. Column-0 `name:` lines start new blocks; lines before the first
/// label form the unlabeled entry block.
pub fn parse_ir(text: &str) -> Result<IRModule, IrError> {
    let mut module = IRModule::default();
    let mut pending: Vec<String> = Vec::new();
    let mut current: Option<IRFunction> = None;
    let mut last_line = 0;

    for (idx, line) in split_lines(text).enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let Some(func) = current.as_mut() else {
            if line.starts_with("define ") {
                if !line.trim_end().ends_with('{') {
                    return Err(IrError::MalformedIR {
                        line: lineno,
                        reason: "define line does not open a body".into(),
                    });
                }
                let symbol = function_symbol(line).ok_or_else(|| IrError::MalformedIR {
                    line: lineno,
                    reason: "define line has no function symbol".into(),
                })?;
                let before = std::mem::take(&mut pending);
                let preceding_lines = if module.functions.is_empty() {
                    module.header_lines = before;
                    Vec::new()
                } else {
                    before
                };
                current = Some(IRFunction {
                    preceding_lines,
                    symbol,
                    signature_line: line.to_string(),
                    blocks: Vec::new(),
                    closing_line: String::new(),
                });
            } else if line.trim_start().starts_with('}') {
                return Err(IrError::MalformedIR {
                    line: lineno,
                    reason: "closing brace outside a function".into(),
                });
            } else {
                pending.push(line.to_string());
            }
            continue;
        };

        if line.trim_end() == "}" {
            func.closing_line = line.to_string();
            module.functions.push(current.take().unwrap());
            continue;
        }
        if line.starts_with("define ") {
            return Err(IrError::MalformedIR {
                line: lineno,
                reason: format!("function `{}` has no closing brace", func.symbol),
            });
        }
        if let Some(label) = label_of(line) {
            if func.blocks.iter().any(|b| b.label.as_deref() == Some(label.as_str())) {
                return Err(IrError::MalformedIR {
                    line: lineno,
                    reason: format!("duplicate block label `{label}`"),
                });
            }
            func.blocks.push(Block {
                label: Some(label),
                label_line: Some(line.to_string()),
                lines: Vec::new(),
            });
        } else {
            if func.blocks.is_empty() {
                func.blocks.push(Block {
                    label: None,
                    label_line: None,
                    lines: Vec::new(),
                });
            }
            func.blocks.last_mut().unwrap().lines.push(line.to_string());
        }
    }

    if let Some(func) = current {
        return Err(IrError::MalformedIR {
            line: last_line,
            reason: format!("function `{}` has no closing brace", func.symbol),
        });
    }
    if module.functions.is_empty() {
        module.header_lines = pending;
    } else {
        module.footer_lines = pending;
    }
    Ok(module)
}

fn split_lines(text: &str) -> impl Iterator<Item = &str> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let empty = text.is_empty();
    body.split('\n').filter(move |_| !empty)
}

/// The function symbol of a define line (without sigil or quotes).
pub(crate) fn function_symbol(line: &str) -> Option<String> {
    let at = line.find('@')?;
    let rest = &line[at + 1..];
    let len = read_ident(rest)?;
    Some(rest[..len].trim_matches('"').to_string())
}

/// The label defined by a column-0 `name:` line, if this is one.
pub(crate) fn label_of(line: &str) -> Option<String> {
    let first = line.chars().next()?;
    if first.is_whitespace() || first == ';' {
        return None;
    }
    let len = read_ident(line)?;
    let rest = &line[len..];
    if !rest.starts_with(':') {
        return None;
    }
    let after = rest[1..].trim_start();
    if after.is_empty() || after.starts_with(';') {
        Some(line[..len].to_string())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAX_IR: &str = "\
; ModuleID = 'max.cpp'
source_filename = \"max.cpp\"

define dso_local noundef i32 @_Z3maxii(i32 noundef %0, i32 noundef %1) local_unnamed_addr #0 {
  %3 = icmp sgt i32 %0, %1
  %4 = select i1 %3, i32 %0, i32 %1
  ret i32 %4
}

declare i32 @puts(ptr)

define i32 @g() {
entry:
  br label %exit

exit:                                             ; preds = %entry
  ret i32 1
}

attributes #0 = { minsize }
";

    #[test]
    fn parses_and_roundtrips() {
        let m = parse_ir(MAX_IR).unwrap();
        assert_eq!(m.functions.len(), 2);
        assert_eq!(m.header_lines.len(), 3);
        assert_eq!(m.functions[0].symbol, "_Z3maxii");
        assert_eq!(m.functions[0].blocks.len(), 1);
        assert!(m.functions[0].blocks[0].label.is_none());
        assert_eq!(m.functions[1].preceding_lines, vec!["", "declare i32 @puts(ptr)", ""]);
        assert_eq!(m.functions[1].blocks.len(), 2);
        assert_eq!(m.functions[1].blocks[1].label.as_deref(), Some("exit"));
        assert_eq!(m.footer_lines, vec!["", "attributes #0 = { minsize }"]);
        assert_eq!(m.serialize(), MAX_IR);
    }

    #[test]
    fn empty_text_has_no_functions() {
        let m = parse_ir("").unwrap();
        assert!(m.functions.is_empty());
        assert_eq!(m.serialize(), "");
    }

    #[test]
    fn unbalanced_braces_are_rejected() {
        let missing_close = "define i32 @f() {\n  ret i32 0\n";
        assert!(matches!(parse_ir(missing_close), Err(IrError::MalformedIR { .. })));
        let nested = "define i32 @f() {\n  ret i32 0\ndefine i32 @g() {\n  ret i32 0\n}\n";
        assert!(matches!(parse_ir(nested), Err(IrError::MalformedIR { .. })));
        let stray = "}\n";
        assert!(matches!(parse_ir(stray), Err(IrError::MalformedIR { .. })));
    }

    #[test]
    fn label_detection() {
        assert_eq!(label_of("2:                  ; preds = %1").as_deref(), Some("2"));
        assert_eq!(label_of("if.then:").as_deref(), Some("if.then"));
        assert_eq!(label_of("\"odd name\":").as_deref(), Some("\"odd name\""));
        assert_eq!(label_of("  %3 = add i32 %1, 2"), None);
        assert_eq!(label_of("; comment: yes"), None);
    }
}
