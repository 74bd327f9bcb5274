//! Compiler frontends and corpus construction.
//!
//! Source files are split into standalone functions, each function is compiled
//! on its own to size-optimized LLVM IR, and the results are written as
//! monolingual and parallel JSON-lines shards.

#[cfg(feature = "native")]
mod compile;
#[cfg(feature = "native")]
mod corpus;
mod extract;

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lang::{LanguageTag, SourceLang};

#[cfg(feature = "native")]
pub use compile::compile_to_ir;
#[cfg(feature = "native")]
pub use corpus::{build_corpus, CorpusOptions, CorpusSummary, ShardCounts};
pub use extract::extract_functions;

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("no frontend command configured for {0}")]
    MissingFrontend(SourceLang),
    #[error("invalid frontend configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    BadShard { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum CompileStatus {
    /// Extracted but not yet sent to a frontend.
    Pending,
    Ok,
    CompileError(String),
    Timeout,
    SkippedTooLong,
}

impl CompileStatus {
    pub fn name(&self) -> &'static str {
        match self {
            CompileStatus::Pending => "pending",
            CompileStatus::Ok => "ok",
            CompileStatus::CompileError(_) => "compile_error",
            CompileStatus::Timeout => "timeout",
            CompileStatus::SkippedTooLong => "skipped_too_long",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: PathBuf,
    /// Byte offset of the first character of the function.
    pub start: usize,
    /// Byte offset one past the closing brace.
    pub end: usize,
}

/// One standalone source function and what its frontend made of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub id: String,
    pub language: LanguageTag,
    pub source: String,
    pub raw_ir: Option<String>,
    pub normalized_ir: Option<String>,
    pub compile_status: CompileStatus,
    pub provenance: Provenance,
}

impl FunctionRecord {
    pub fn new(language: LanguageTag, source: String, provenance: Provenance) -> Self {
        Self {
            id: record_id(language, &source),
            language,
            source,
            raw_ir: None,
            normalized_ir: None,
            compile_status: CompileStatus::Pending,
            provenance,
        }
    }

    /// Checks `normalized_ir ⇒ raw_ir ⇒ ok`.
    pub fn is_consistent(&self) -> bool {
        (self.normalized_ir.is_none() || self.raw_ir.is_some())
            && (self.raw_ir.is_none() || self.compile_status == CompileStatus::Ok)
    }

    pub fn is_parallel(&self) -> bool {
        self.compile_status == CompileStatus::Ok && self.normalized_ir.is_some()
    }
}

/// Hex SHA-256 of the language name, a NUL byte and the source text.
pub fn record_id(language: LanguageTag, source: &str) -> String {
    let mut h = Sha256::new();
    h.update(language.to_string().as_bytes());
    h.update([0u8]);
    h.update(source.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShardKind {
    Monolingual,
    Parallel,
}

pub fn shard_path(dir: &Path, kind: ShardKind, lang: SourceLang) -> PathBuf {
    let prefix = match kind {
        ShardKind::Monolingual => "mono",
        ShardKind::Parallel => "para",
    };
    dir.join(format!("{prefix}.{lang}.jsonl"))
}

pub fn read_shard(path: &Path) -> Result<Vec<FunctionRecord>, FrontendError> {
    let file = std::fs::File::open(path).map_err(|e| FrontendError::Io { path: path.to_path_buf(), source: e })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FrontendError::Io { path: path.to_path_buf(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| FrontendError::BadShard {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkdirPolicy {
    /// A fresh temporary directory per function, removed afterwards.
    #[default]
    Temp,
    /// Like `Temp`, but the directory is kept for inspection.
    Keep,
}

/// Per-language command templates with `{in}` and `{out}` placeholders.
///
/// Templates run under `sh -c` inside the work directory; the placeholders are
/// replaced by single-quoted file names relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub commands: BTreeMap<SourceLang, String>,
    /// Text prepended to each function before compiling (includes, stub types).
    pub preludes: BTreeMap<SourceLang, String>,
    pub timeout_secs: f64,
    pub workdir: WorkdirPolicy,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            commands: BTreeMap::new(),
            preludes: BTreeMap::new(),
            timeout_secs: 30.0,
            workdir: WorkdirPolicy::Temp,
        }
    }
}

pub const CLANG_TEMPLATE: &str = "clang++ -x c++ -std=c++17 -S -emit-llvm -Oz -o {out} {in}";
pub const CPP_PRELUDE: &str = "#include <cstdint>\n#include <cstddef>\n#include <cstring>\n#include <cmath>\n#include <string>\n#include <vector>\n#include <algorithm>\n";
/// Exports every free function so `rustc` keeps it in a library build.
pub const RUSTC_TEMPLATE: &str = "sed -E 's/^([[:space:]]*)(pub )?fn /\\1#[no_mangle] pub fn /' {in} > {in}.lib.rs && rustc --crate-name fnunit --crate-type=lib --emit=llvm-ir -C opt-level=z -C panic=abort -C debuginfo=0 -A warnings -o {out} {in}.lib.rs";

impl FrontendConfig {
    /// `clang++` for C++ and `rustc` for Rust, both at their size-optimizing level.
    pub fn desk_defaults() -> Self {
        let mut cfg = Self::default();
        cfg.commands.insert(SourceLang::Cpp, CLANG_TEMPLATE.to_string());
        cfg.preludes.insert(SourceLang::Cpp, CPP_PRELUDE.to_string());
        cfg.commands.insert(SourceLang::Rust, RUSTC_TEMPLATE.to_string());
        cfg
    }

    pub fn validate(&self) -> Result<(), FrontendError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(FrontendError::InvalidConfig(format!("timeout must be positive, got {}", self.timeout_secs)));
        }
        for (lang, cmd) in &self.commands {
            for ph in ["{in}", "{out}"] {
                if !cmd.contains(ph) {
                    return Err(FrontendError::InvalidConfig(format!("{lang} command lacks the {ph} placeholder")));
                }
            }
        }
        Ok(())
    }

    pub fn command(&self, lang: SourceLang) -> Result<&str, FrontendError> {
        self.commands.get(&lang).map(String::as_str).ok_or(FrontendError::MissingFrontend(lang))
    }
}
