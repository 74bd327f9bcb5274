use std::collections::{HashMap, HashSet};

use super::parse::label_of;
use super::{idents, rewrite_idents, IRFunction, IRModule, IrError, NormalizationConfig};

/// Renames block labels to `bb0, bb1, ...` in block order and, if enabled, renumbers
/// unnamed temporaries densely. Applying it twice gives the same text as applying it once.
pub fn canonicalize(m: &IRModule, cfg: &NormalizationConfig) -> Result<IRModule, IrError> {
    check_label_closure(m)?;
    let numbered_types = m
        .header_lines
        .iter()
        .any(|l| l.starts_with('%') && l.contains("= type") && is_numeric(l[1..].split_whitespace().next().unwrap_or("")));
    let mut out = m.clone();
    for f in &mut out.functions {
        if cfg.canonicalize_blocks {
            canonicalize_labels(f);
        }
        if cfg.canonicalize_temporaries && !numbered_types {
            renumber_temporaries(f, cfg.canonicalize_blocks);
        }
    }
    Ok(out)
}

/// Fails with `DanglingLabel` when a `label %x` operand names no block of its function.
pub fn check_label_closure(m: &IRModule) -> Result<(), IrError> {
    for f in &m.functions {
        let defined = block_names(f);
        for line in f.instruction_lines() {
            for target in label_operands(line) {
                if !defined.contains(&target) {
                    return Err(IrError::DanglingLabel {
                        function: f.symbol.clone(),
                        label: target,
                    });
                }
            }
        }
    }
    Ok(())
}

fn is_numeric(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Number of unnamed (`%N`) parameters, which is also the implicit number of an
/// unlabeled entry block.
fn numeric_args(f: &IRFunction) -> Vec<String> {
    idents(params_of(&f.signature_line), '%')
        .into_iter()
        .filter(|s| is_numeric(s))
        .collect()
}

fn params_of(signature: &str) -> &str {
    // The parameter list is the parenthesized group right after the function symbol.
    // Quoted (demangled) symbols may themselves contain parentheses.
    let Some(at) = signature.find('@') else { return "" };
    let sym_len = super::read_ident(&signature[at + 1..]).unwrap_or(0);
    let rest = &signature[at + 1 + sym_len..];
    let Some(open) = rest.find('(') else { return "" };
    let mut depth = 0usize;
    for (i, ch) in rest[open..].char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return &rest[open + 1..open + i];
                }
            }
            _ => {}
        }
    }
    &rest[open + 1..]
}

/// Block names in order; the unlabeled entry block gets its implicit number.
fn block_names(f: &IRFunction) -> Vec<String> {
    let implicit = numeric_args(f).len().to_string();
    f.blocks
        .iter()
        .map(|b| b.label.clone().unwrap_or_else(|| implicit.clone()))
        .collect()
}

fn label_operands(line: &str) -> Vec<String> {
    let mut found = Vec::new();
    let mut rest = line;
    while let Some(pos) = rest.find("label %") {
        let after = &rest[pos + "label ".len()..];
        let ids = idents(after, '%');
        if let Some(first) = ids.into_iter().next() {
            if after[1..].starts_with(first.as_str()) {
                found.push(first);
            }
        }
        rest = &rest[pos + "label %".len()..];
    }
    found
}

fn canonicalize_labels(f: &mut IRFunction) {
    let names = block_names(f);
    let mut map: HashMap<String, String> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), format!("bb{i}")))
        .collect();
    // Non-label values that would collide with a new label name are moved aside.
    let labels: HashSet<&String> = names.iter().collect();
    for v in local_values(f) {
        if !labels.contains(&v) && is_bb_name(&v) {
            map.insert(v.clone(), format!("{v}.v"));
        }
    }
    let rename = |line: &str| rewrite_idents(line, '%', |body| map.get(body).cloned());

    f.signature_line = rename(&f.signature_line);
    for (i, b) in f.blocks.iter_mut().enumerate() {
        let new_label = format!("bb{i}");
        b.label_line = Some(match &b.label_line {
            Some(l) => {
                let old = label_of(l).unwrap_or_default();
                let tail = rename(&l[old.len() + 1..]);
                format!("{new_label}:{tail}")
            }
            None => format!("{new_label}:"),
        });
        b.label = Some(new_label);
        for l in &mut b.lines {
            *l = rename(l);
        }
    }
}

fn is_bb_name(s: &str) -> bool {
    s.strip_prefix("bb").is_some_and(is_numeric)
}

/// Locally defined value names: parameters and `%x = ...` results.
fn local_values(f: &IRFunction) -> Vec<String> {
    let mut out = idents(params_of(&f.signature_line), '%');
    for line in f.instruction_lines() {
        if let Some(name) = defined_value(line) {
            out.push(name);
        }
    }
    out
}

fn defined_value(line: &str) -> Option<String> {
    let t = line.trim_start().strip_prefix('%')?;
    let len = super::read_ident(t)?;
    t[len..].trim_start().starts_with('=').then(|| t[..len].to_string())
}

fn renumber_temporaries(f: &mut IRFunction, labels_named: bool) {
    let mut order: Vec<String> = numeric_args(f);
    let implicit = order.len().to_string();
    for b in &f.blocks {
        if !labels_named {
            match &b.label {
                Some(l) if is_numeric(l) => order.push(l.clone()),
                None => order.push(implicit.clone()),
                _ => {}
            }
        }
        order.extend(b.lines.iter().filter_map(|l| defined_value(l)).filter(|v| is_numeric(v)));
    }
    let map: HashMap<String, String> = order.into_iter().enumerate().map(|(i, v)| (v, i.to_string())).collect();
    if map.iter().all(|(k, v)| k == v) {
        return;
    }
    let rename = |line: &str| rewrite_idents(line, '%', |body| map.get(body).cloned());
    f.signature_line = rename(&f.signature_line);
    for b in &mut f.blocks {
        if let (Some(label), Some(line)) = (&b.label, &b.label_line) {
            if let Some(new) = map.get(label) {
                let tail = rename(&line[label.len() + 1..]);
                b.label_line = Some(format!("{new}:{tail}"));
                b.label = Some(new.clone());
            }
        }
        for l in &mut b.lines {
            *l = rename(l);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_ir;
    use super::*;

    const LOOP: &str = "\
define i64 @sum(i64 %0) {
  %2 = icmp sgt i64 %0, 0
  br i1 %2, label %3, label %9
3:
  %4 = phi i64 [ %6, %3 ], [ 0, %1 ]
  %5 = phi i64 [ %7, %3 ], [ 0, %1 ]
  %6 = add i64 %4, 1
  %7 = add i64 %5, %4
  %8 = icmp eq i64 %6, %0
  br i1 %8, label %9, label %3
9:
  %10 = phi i64 [ 0, %1 ], [ %7, %3 ]
  ret i64 %10
}
";

    fn cfg() -> NormalizationConfig {
        NormalizationConfig::default()
    }

    #[test]
    fn labels_and_temporaries_renamed() {
        let m = canonicalize(&parse_ir(LOOP).unwrap(), &cfg()).unwrap();
        let expected = "\
define i64 @sum(i64 %0) {
bb0:
  %1 = icmp sgt i64 %0, 0
  br i1 %1, label %bb1, label %bb2
bb1:
  %2 = phi i64 [ %4, %bb1 ], [ 0, %bb0 ]
  %3 = phi i64 [ %5, %bb1 ], [ 0, %bb0 ]
  %4 = add i64 %2, 1
  %5 = add i64 %3, %2
  %6 = icmp eq i64 %4, %0
  br i1 %6, label %bb2, label %bb1
bb2:
  %7 = phi i64 [ 0, %bb0 ], [ %5, %bb1 ]
  ret i64 %7
}
";
        assert_eq!(m.serialize(), expected);
    }

    #[test]
    fn idempotent() {
        let once = canonicalize(&parse_ir(LOOP).unwrap(), &cfg()).unwrap();
        let twice = canonicalize(&parse_ir(&once.serialize()).unwrap(), &cfg()).unwrap();
        assert_eq!(once.serialize(), twice.serialize());
    }

    #[test]
    fn temporaries_only_keeps_numbering_with_labels() {
        let c = NormalizationConfig {
            canonicalize_blocks: false,
            ..cfg()
        };
        let m = canonicalize(&parse_ir(LOOP).unwrap(), &c).unwrap();
        assert_eq!(m.serialize(), LOOP);
    }

    #[test]
    fn named_labels_and_collisions() {
        let text = "\
define i32 @f(i32 %x) {
start:
  %bb1 = add i32 %x, 1
  br label %bb3
bb3:
  ret i32 %bb1
}
";
        let m = canonicalize(&parse_ir(text).unwrap(), &cfg()).unwrap();
        let s = m.serialize();
        assert!(s.contains("%bb1.v = add i32 %x, 1"), "{s}");
        assert!(s.contains("br label %bb1\nbb1:\n  ret i32 %bb1.v"), "{s}");
    }

    #[test]
    fn demangled_symbol_with_parentheses() {
        let text = "define i32 @\"add0(int, int)\"(i32 %0, i32 %1) {\n  %3 = add i32 %0, 1\n  %4 = add i32 %3, %1\n  ret i32 %4\n}\n";
        let m = canonicalize(&parse_ir(text).unwrap(), &cfg()).unwrap();
        assert_eq!(
            m.serialize(),
            "define i32 @\"add0(int, int)\"(i32 %0, i32 %1) {\nbb0:\n  %2 = add i32 %0, 1\n  %3 = add i32 %2, %1\n  ret i32 %3\n}\n"
        );
    }

    #[test]
    fn dangling_label_detected() {
        let text = "define void @f() {\n  br label %7\n}\n";
        let m = parse_ir(text).unwrap();
        assert_eq!(
            canonicalize(&m, &cfg()),
            Err(IrError::DanglingLabel {
                function: "f".into(),
                label: "7".into()
            })
        );
    }
}
