use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{rewrite_idents, IRModule, NormalizationConfig};

/// A mangled symbol that was left as is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemangleFailure {
    pub symbol: String,
    pub reason: String,
}

/// Replaces mangled `@` symbols with their demangled, quoted form.
///
/// Symbols the demangler cannot decode are kept and reported; this never fails.
pub fn demangle_symbols(m: &IRModule, cfg: &NormalizationConfig) -> (IRModule, Vec<DemangleFailure>) {
    if !cfg.demangle {
        return (m.clone(), Vec::new());
    }
    let mut cache: HashMap<String, Option<String>> = HashMap::new();
    let mut failures = Vec::new();
    let mut lookup = |sym: &str| -> Option<String> {
        if let Some(hit) = cache.get(sym) {
            return hit.clone();
        }
        let result = match demangle_one(sym, cfg) {
            Ok(d) => Some(d),
            Err(reason) => {
                failures.push(DemangleFailure {
                    symbol: sym.to_string(),
                    reason,
                });
                None
            }
        };
        cache.insert(sym.to_string(), result.clone());
        result
    };
    let mut rewrite = |line: &str| {
        rewrite_idents(line, '@', |body| {
            let sym = body.trim_matches('"');
            if !is_mangled(sym) {
                return None;
            }
            lookup(sym).map(|d| format!("\"{d}\""))
        })
    };

    let mut out = m.clone();
    out.header_lines.iter_mut().for_each(|l| *l = rewrite(l));
    for f in &mut out.functions {
        f.preceding_lines.iter_mut().for_each(|l| *l = rewrite(l));
        f.signature_line = rewrite(&f.signature_line);
        if let Some(sym) = super::parse::function_symbol(&f.signature_line) {
            f.symbol = sym;
        }
        for b in &mut f.blocks {
            b.lines.iter_mut().for_each(|l| *l = rewrite(l));
        }
    }
    out.footer_lines.iter_mut().for_each(|l| *l = rewrite(l));
    (out, failures)
}

fn is_mangled(sym: &str) -> bool {
    sym.starts_with("_Z") || sym.starts_with("_R")
}

fn demangle_one(sym: &str, cfg: &NormalizationConfig) -> Result<String, String> {
    let decoded = match &cfg.demangler_command {
        Some(cmd) => run_command(cmd, sym)?,
        None if sym.starts_with("_R") => match rustc_demangle::try_demangle(sym) {
            // The alternate form drops crate disambiguators, which vary between builds.
            Ok(d) => format!("{d:#}"),
            Err(_) => return Err("invalid Rust v0 symbol".into()),
        },
        None => demangle_itanium(sym).ok_or_else(|| "unsupported Itanium construct".to_string())?,
    };
    if decoded.is_empty() || decoded == sym {
        return Err("demangler returned the symbol unchanged".into());
    }
    if decoded.contains('"') || decoded.contains('\n') {
        return Err("demangled name cannot be quoted".into());
    }
    Ok(decoded)
}

#[cfg(feature = "native")]
fn run_command(template: &str, sym: &str) -> Result<String, String> {
    if sym.contains('\'') {
        return Err("symbol cannot be shell-quoted".into());
    }
    let cmd = template.replace("{sym}", &format!("'{sym}'"));
    let out = std::process::Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| format!("could not run `{cmd}`: {e}"))?;
    if !out.status.success() {
        return Err(format!("`{cmd}` exited with {}", out.status));
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

#[cfg(not(feature = "native"))]
fn run_command(_template: &str, _sym: &str) -> Result<String, String> {
    Err("external demangler unavailable in this build".into())
}

/// Decodes an Itanium C++ symbol into the same text `c++filt` prints.
///
/// Covers plain, nested and templated function names, constructors, destructors,
/// operators, builtin and class types with pointer/reference/cv modifiers, and
/// substitutions. Function and array types, local names and expressions beyond integer
/// literals return `None`.
pub fn demangle_itanium(sym: &str) -> Option<String> {
    let rest = sym.strip_prefix("_Z")?;
    let mut d = Demangler {
        s: rest.as_bytes(),
        pos: 0,
        subs: Vec::new(),
        tmpl: Vec::new(),
    };
    let out = d.encoding()?;
    if d.pos == d.s.len() {
        Some(out)
    } else if d.peek() == Some(b'.') {
        Some(format!("{out} [clone {}]", &rest[d.pos..]))
    } else {
        None
    }
}

struct Demangler<'a> {
    s: &'a [u8],
    pos: usize,
    subs: Vec<String>,
    tmpl: Vec<String>,
}

struct Name {
    text: String,
    template: bool,
    structor: bool,
    suffix: String,
}

const OPERATORS: &[(&str, &str)] = &[
    ("nw", "operator new"),
    ("na", "operator new[]"),
    ("dl", "operator delete"),
    ("da", "operator delete[]"),
    ("ps", "operator+"),
    ("ng", "operator-"),
    ("ad", "operator&"),
    ("de", "operator*"),
    ("co", "operator~"),
    ("pl", "operator+"),
    ("mi", "operator-"),
    ("ml", "operator*"),
    ("dv", "operator/"),
    ("rm", "operator%"),
    ("an", "operator&"),
    ("or", "operator|"),
    ("eo", "operator^"),
    ("aS", "operator="),
    ("pL", "operator+="),
    ("mI", "operator-="),
    ("mL", "operator*="),
    ("dV", "operator/="),
    ("rM", "operator%="),
    ("aN", "operator&="),
    ("oR", "operator|="),
    ("eO", "operator^="),
    ("ls", "operator<<"),
    ("rs", "operator>>"),
    ("lS", "operator<<="),
    ("rS", "operator>>="),
    ("eq", "operator=="),
    ("ne", "operator!="),
    ("lt", "operator<"),
    ("gt", "operator>"),
    ("le", "operator<="),
    ("ge", "operator>="),
    ("ss", "operator<=>"),
    ("nt", "operator!"),
    ("aa", "operator&&"),
    ("oo", "operator||"),
    ("pp", "operator++"),
    ("mm", "operator--"),
    ("cm", "operator,"),
    ("pm", "operator->*"),
    ("pt", "operator->"),
    ("cl", "operator()"),
    ("ix", "operator[]"),
];

fn builtin(c: u8) -> Option<&'static str> {
    Some(match c {
        b'v' => "void",
        b'w' => "wchar_t",
        b'b' => "bool",
        b'c' => "char",
        b'a' => "signed char",
        b'h' => "unsigned char",
        b's' => "short",
        b't' => "unsigned short",
        b'i' => "int",
        b'j' => "unsigned int",
        b'l' => "long",
        b'm' => "unsigned long",
        b'x' => "long long",
        b'y' => "unsigned long long",
        b'n' => "__int128",
        b'o' => "unsigned __int128",
        b'f' => "float",
        b'd' => "double",
        b'e' => "long double",
        b'g' => "__float128",
        b'z' => "...",
        _ => return None,
    })
}

fn special_substitution(c: u8) -> Option<&'static str> {
    Some(match c {
        b'a' => "std::allocator",
        b'b' => "std::basic_string",
        b's' => "std::basic_string<char, std::char_traits<char>, std::allocator<char> >",
        b'i' => "std::basic_istream<char, std::char_traits<char> >",
        b'o' => "std::basic_ostream<char, std::char_traits<char> >",
        b'd' => "std::basic_iostream<char, std::char_traits<char> >",
        _ => return None,
    })
}

impl Demangler<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.s.get(self.pos + k).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn at_params_end(&self) -> bool {
        matches!(self.peek(), None | Some(b'.'))
    }

    fn encoding(&mut self) -> Option<String> {
        let name = self.name(true)?;
        if self.at_params_end() {
            return Some(name.text + &name.suffix);
        }
        let ret = if name.template && !name.structor {
            Some(self.ty()?)
        } else {
            None
        };
        let mut params = Vec::new();
        while !self.at_params_end() {
            params.push(self.ty()?);
        }
        if params.len() == 1 && params[0] == "void" {
            params.clear();
        }
        let mut out = String::new();
        if let Some(r) = ret {
            out.push_str(&r);
            out.push(' ');
        }
        out.push_str(&name.text);
        out.push('(');
        out.push_str(&params.join(", "));
        out.push(')');
        out.push_str(&name.suffix);
        Some(out)
    }

    fn name(&mut self, top: bool) -> Option<Name> {
        match self.peek()? {
            b'N' => self.nested(top),
            b'Z' => None,
            _ => {
                self.eat(b'L');
                let (text, structor) = if self.peek() == Some(b'S') && self.peek_at(1) == Some(b't') {
                    self.pos += 2;
                    let (n, s) = self.unqualified("")?;
                    (format!("std::{n}"), s)
                } else if self.peek() == Some(b'S') {
                    let sub = self.substitution()?;
                    if self.peek() != Some(b'I') {
                        return None;
                    }
                    let args = self.template_args(top)?;
                    return Some(Name {
                        text: sub + &args,
                        template: true,
                        structor: false,
                        suffix: String::new(),
                    });
                } else {
                    self.unqualified("")?
                };
                let mut name = Name {
                    text,
                    template: false,
                    structor,
                    suffix: String::new(),
                };
                if self.peek() == Some(b'I') {
                    self.subs.push(name.text.clone());
                    name.text += &self.template_args(top)?;
                    name.template = true;
                }
                Some(name)
            }
        }
    }

    fn nested(&mut self, top: bool) -> Option<Name> {
        self.pos += 1;
        let mut suffix = String::new();
        let mut quals = (false, false, false);
        loop {
            match self.peek()? {
                b'r' => quals.0 = true,
                b'V' => quals.1 = true,
                b'K' => quals.2 = true,
                _ => break,
            }
            self.pos += 1;
        }
        if quals.2 {
            suffix.push_str(" const");
        }
        if quals.1 {
            suffix.push_str(" volatile");
        }
        if quals.0 {
            suffix.push_str(" restrict");
        }
        if self.eat(b'R') {
            suffix.push_str(" &");
        } else if self.eat(b'O') {
            suffix.push_str(" &&");
        }

        let mut prefix = String::new();
        let mut last = String::new();
        let mut template = false;
        let mut structor = false;
        loop {
            match self.peek()? {
                b'E' => {
                    self.pos += 1;
                    break;
                }
                b'S' if self.peek_at(1) == Some(b't') => {
                    self.pos += 2;
                    prefix = "std".into();
                    continue;
                }
                b'S' => {
                    prefix = self.substitution()?;
                    continue;
                }
                b'I' => {
                    if prefix.is_empty() {
                        return None;
                    }
                    prefix += &self.template_args(top)?;
                    template = true;
                }
                _ => {
                    let (comp, is_structor) = self.unqualified(&last)?;
                    structor = is_structor;
                    template = false;
                    if !is_structor {
                        last = comp.clone();
                    }
                    prefix = if prefix.is_empty() { comp } else { format!("{prefix}::{comp}") };
                }
            }
            if self.peek()? != b'E' {
                self.subs.push(prefix.clone());
            }
        }
        Some(Name {
            text: prefix,
            template,
            structor,
            suffix,
        })
    }

    /// Source name, operator name, or constructor/destructor of `enclosing`.
    fn unqualified(&mut self, enclosing: &str) -> Option<(String, bool)> {
        let c = self.peek()?;
        if c.is_ascii_digit() {
            return self.source_name().map(|n| (n, false));
        }
        let class = enclosing.split('<').next().unwrap_or(enclosing);
        match (c, self.peek_at(1)?) {
            (b'C', b'1' | b'2' | b'3') if !class.is_empty() => {
                self.pos += 2;
                Some((class.to_string(), true))
            }
            (b'D', b'0' | b'1' | b'2') if !class.is_empty() => {
                self.pos += 2;
                Some((format!("~{class}"), true))
            }
            (a, b) => {
                let code = [a, b];
                let code = std::str::from_utf8(&code).ok()?;
                let (_, op) = OPERATORS.iter().find(|(k, _)| *k == code)?;
                self.pos += 2;
                Some((op.to_string(), false))
            }
        }
    }

    fn number(&mut self) -> Option<usize> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok()
    }

    fn source_name(&mut self) -> Option<String> {
        let len = self.number()?;
        let end = self.pos.checked_add(len).filter(|&e| e <= self.s.len())?;
        let name = std::str::from_utf8(&self.s[self.pos..end]).ok()?.to_string();
        self.pos = end;
        if name.starts_with("_GLOBAL__N") {
            return Some("(anonymous namespace)".into());
        }
        Some(name)
    }

    /// `S_`, `S<base-36>_` or a two-letter standard abbreviation.
    fn substitution(&mut self) -> Option<String> {
        if !self.eat(b'S') {
            return None;
        }
        if let Some(s) = self.peek().and_then(special_substitution) {
            self.pos += 1;
            return Some(s.to_string());
        }
        let mut idx = 0usize;
        let mut has_digits = false;
        loop {
            let c = self.peek()?;
            self.pos += 1;
            match c {
                b'_' => break,
                b'0'..=b'9' => idx = idx * 36 + (c - b'0') as usize,
                b'A'..=b'Z' => idx = idx * 36 + (c - b'A') as usize + 10,
                _ => return None,
            }
            has_digits = true;
        }
        let idx = if has_digits { idx + 1 } else { 0 };
        self.subs.get(idx).cloned()
    }

    fn template_param(&mut self) -> Option<String> {
        self.pos += 1;
        let idx = if self.eat(b'_') {
            0
        } else {
            let n = self.number()? + 1;
            if !self.eat(b'_') {
                return None;
            }
            n
        };
        self.tmpl.get(idx).cloned()
    }

    fn template_args(&mut self, top: bool) -> Option<String> {
        if !self.eat(b'I') {
            return None;
        }
        let mut args = Vec::new();
        while !self.eat(b'E') {
            let arg = match self.peek()? {
                b'L' => self.literal()?,
                b'X' => {
                    self.pos += 1;
                    let lit = self.literal()?;
                    if !self.eat(b'E') {
                        return None;
                    }
                    lit
                }
                _ => self.ty()?,
            };
            args.push(arg);
        }
        if top {
            self.tmpl = args.clone();
        }
        let mut out = format!("<{}", args.join(", "));
        out.push_str(if out.ends_with('>') { " >" } else { ">" });
        Some(out)
    }

    fn literal(&mut self) -> Option<String> {
        if !self.eat(b'L') {
            return None;
        }
        let ty = self.peek()?;
        self.pos += 1;
        let negative = self.eat(b'n');
        let value = self.number()?;
        if !self.eat(b'E') {
            return None;
        }
        let sign = if negative { "-" } else { "" };
        Some(match ty {
            b'b' if !negative && value <= 1 => (if value == 1 { "true" } else { "false" }).into(),
            b'i' => format!("{sign}{value}"),
            b'j' => format!("{sign}{value}u"),
            b'l' => format!("{sign}{value}l"),
            b'm' => format!("{sign}{value}ul"),
            b'x' => format!("{sign}{value}ll"),
            b'y' => format!("{sign}{value}ull"),
            other => format!("({}){sign}{value}", builtin(other)?),
        })
    }

    fn ty(&mut self) -> Option<String> {
        let c = self.peek()?;
        if let Some(b) = builtin(c) {
            self.pos += 1;
            return Some(b.to_string());
        }
        let t = match c {
            b'D' => {
                let name = match self.peek_at(1)? {
                    b'n' => "decltype(nullptr)",
                    b'i' => "char32_t",
                    b's' => "char16_t",
                    b'u' => "char8_t",
                    _ => return None,
                };
                self.pos += 2;
                return Some(name.to_string());
            }
            b'P' | b'R' | b'O' => {
                self.pos += 1;
                let inner = self.ty()?;
                let sigil = match c {
                    b'P' => "*",
                    b'R' => "&",
                    _ => "&&",
                };
                inner + sigil
            }
            b'r' | b'V' | b'K' => {
                let mut quals = (false, false, false);
                while let Some(q) = self.peek() {
                    match q {
                        b'r' => quals.0 = true,
                        b'V' => quals.1 = true,
                        b'K' => quals.2 = true,
                        _ => break,
                    }
                    self.pos += 1;
                }
                let mut t = self.ty()?;
                if quals.2 {
                    t.push_str(" const");
                }
                if quals.1 {
                    t.push_str(" volatile");
                }
                if quals.0 {
                    t.push_str(" restrict");
                }
                t
            }
            b'T' => self.template_param()?,
            b'N' => self.nested(false)?.text,
            b'S' if self.peek_at(1) == Some(b't') => {
                self.pos += 2;
                let name = format!("std::{}", self.source_name()?);
                if self.peek() == Some(b'I') {
                    self.subs.push(name.clone());
                    name + &self.template_args(false)?
                } else {
                    name
                }
            }
            b'S' => {
                let sub = self.substitution()?;
                if self.peek() != Some(b'I') {
                    return Some(sub);
                }
                sub + &self.template_args(false)?
            }
            b'0'..=b'9' => {
                let name = self.source_name()?;
                if self.peek() == Some(b'I') {
                    self.subs.push(name.clone());
                    name + &self.template_args(false)?
                } else {
                    name
                }
            }
            _ => return None,
        };
        self.subs.push(t.clone());
        Some(t)
    }
}
