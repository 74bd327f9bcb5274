use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CaseStatus, EvalCase, EvalError};
use crate::lang::SourceLang;
use crate::process::{run_with_timeout, shell_quote, RunOutcome};

/// How to build and run one language's test programs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toolchain {
    /// File extension of the test program.
    pub ext: String,
    /// `sh -c` template with `{src}` and `{bin}` placeholders.
    pub compile: String,
    /// Program whose presence on `PATH` means the toolchain is usable.
    pub probe: String,
    /// Regex whose first capture group names a compiler error.
    pub error_pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toolchains {
    pub languages: BTreeMap<SourceLang, Toolchain>,
    pub compile_timeout_secs: f64,
    pub run_timeout_secs: f64,
    /// Address-space limit for the test process, in KiB.
    pub memory_kib: Option<u64>,
    /// Run test programs in fresh user and network namespaces when possible.
    pub isolate: bool,
}

impl Default for Toolchains {
    fn default() -> Self {
        let mut languages = BTreeMap::new();
        languages.insert(
            SourceLang::Cpp,
            Toolchain {
                ext: "cpp".into(),
                compile: "clang++ -std=c++17 -O1 -w -o {bin} {src}".into(),
                probe: "clang++".into(),
                error_pattern: r"error: ([^'\n:]+)".into(),
            },
        );
        languages.insert(
            SourceLang::Rust,
            Toolchain {
                ext: "rs".into(),
                compile: "rustc --edition 2021 -O -A warnings -o {bin} {src}".into(),
                probe: "rustc".into(),
                error_pattern: r"error\[(E\d{4})\]".into(),
            },
        );
        Self {
            languages,
            compile_timeout_secs: 10.0,
            run_timeout_secs: 5.0,
            memory_kib: Some(1 << 21),
            isolate: true,
        }
    }
}

impl Toolchains {
    pub fn get(&self, lang: SourceLang) -> Result<&Toolchain, EvalError> {
        let tc = self.languages.get(&lang).ok_or(EvalError::ToolchainMissing(lang))?;
        let probe = format!("command -v {} >/dev/null", shell_quote(&tc.probe));
        let dir = std::env::temp_dir();
        match run_with_timeout(&probe, &dir, Duration::from_secs(5)) {
            Ok(RunOutcome::Exited { success: true, .. }) => Ok(tc),
            _ => Err(EvalError::ToolchainMissing(lang)),
        }
    }
}

/// Whether `unshare -rn` works here (it needs unprivileged user namespaces).
fn namespaces_available() -> bool {
    static OK: OnceLock<bool> = OnceLock::new();
    *OK.get_or_init(|| {
        let dir = std::env::temp_dir();
        let ok = matches!(
            run_with_timeout("unshare -rn true", &dir, Duration::from_secs(5)),
            Ok(RunOutcome::Exited { success: true, .. })
        );
        if !ok {
            log::warn!("unshare is unavailable; test programs run without network isolation");
        }
        ok
    })
}

/// Error identifiers in `diagnostics`, deduplicated, in order of appearance.
pub fn error_ids(diagnostics: &str, pattern: &Regex) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for cap in pattern.captures_iter(diagnostics) {
        let id = cap.get(1).map_or("", |m| m.as_str()).trim().to_string();
        if !id.is_empty() && !ids.contains(&id) {
            ids.push(id);
        }
    }
    if ids.is_empty() {
        ids.push("unknown".into());
    }
    ids
}

/// Compiles `candidate` into the case's test program and runs it.
///
/// Exit 0 is a pass and exit 1 a failed check; any other exit or a signal
/// is a runtime error.
pub fn run_case(candidate: &str, case: &EvalCase, tc: &Toolchains) -> Result<CaseStatus, EvalError> {
    let chain = tc.get(case.lang)?;
    let pattern = Regex::new(&chain.error_pattern).map_err(|e| EvalError::InvalidSet(e.to_string()))?;
    let dir = tempfile::Builder::new()
        .prefix("codeir-eval-")
        .tempdir()
        .map_err(|e| EvalError::Io {
            path: std::env::temp_dir(),
            source: e,
        })?;
    let src = dir.path().join(format!("main.{}", chain.ext));
    let bin = dir.path().join("main.bin");
    std::fs::write(&src, case.program(candidate)).map_err(|e| EvalError::Io {
        path: src.clone(),
        source: e,
    })?;
    let compile = chain
        .compile
        .replace("{src}", &shell_quote(&src.to_string_lossy()))
        .replace("{bin}", &shell_quote(&bin.to_string_lossy()));
    let io_err = |e| EvalError::Io {
        path: dir.path().to_path_buf(),
        source: e,
    };
    match run_with_timeout(&compile, dir.path(), Duration::from_secs_f64(tc.compile_timeout_secs)).map_err(io_err)? {
        RunOutcome::TimedOut => return Ok(CaseStatus::Timeout),
        RunOutcome::Exited { success: false, stderr, stdout, .. } => {
            return Ok(CaseStatus::CompileError(error_ids(&format!("{stderr}\n{stdout}"), &pattern)));
        }
        RunOutcome::Exited { success: true, .. } => {}
    }
    let mut run = String::new();
    if let Some(kib) = tc.memory_kib {
        run.push_str(&format!("ulimit -v {kib} 2>/dev/null; "));
    }
    run.push_str("exec ");
    if tc.isolate && namespaces_available() {
        run.push_str("unshare -rn ");
    }
    run.push_str(&shell_quote(&bin.to_string_lossy()));
    Ok(match run_with_timeout(&run, dir.path(), Duration::from_secs_f64(tc.run_timeout_secs)).map_err(io_err)? {
        RunOutcome::TimedOut => CaseStatus::Timeout,
        RunOutcome::Exited { code: Some(0), .. } => CaseStatus::Pass,
        RunOutcome::Exited { code: Some(1), .. } => CaseStatus::TestFailure,
        RunOutcome::Exited { .. } => CaseStatus::RuntimeError,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rust_error_codes_are_extracted() {
        let re = Regex::new(r"error\[(E\d{4})\]").unwrap();
        let diag = "error[E0308]: mismatched types\nerror[E0425]: cannot find value\nerror[E0308]: again";
        assert_eq!(error_ids(diag, &re), vec!["E0308", "E0425"]);
        assert_eq!(error_ids("warning only", &re), vec!["unknown"]);
    }

    #[test]
    fn clang_messages_become_identifiers() {
        let re = Regex::new(Toolchains::default().languages[&SourceLang::Cpp].error_pattern.as_str()).unwrap();
        let diag = "e.cpp:1:21: error: use of undeclared identifier 'y'\n";
        assert_eq!(error_ids(diag, &re), vec!["use of undeclared identifier"]);
    }

    #[test]
    fn missing_language_is_reported() {
        let tc = Toolchains::default();
        assert!(matches!(tc.get(SourceLang::Go), Err(EvalError::ToolchainMissing(SourceLang::Go))));
    }
}
