use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{compile_to_ir, extract_functions, shard_path, CompileStatus, FrontendConfig, FrontendError, FunctionRecord, ShardKind};
use crate::irnorm::{normalize, NormalizationConfig};
use crate::lang::{LanguageTag, SourceLang};
use crate::pool::{default_jobs, map_ordered};
use crate::tokenizer::{pretokenize, Vocab};

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    pub jobs: usize,
    /// Functions longer than this many tokens are marked `skipped_too_long`.
    pub max_tokens: Option<usize>,
    /// Tokenizer used for the length guard; without one, pre-tokens are counted.
    pub vocab: Option<Vocab>,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            jobs: default_jobs(),
            max_tokens: None,
            vocab: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardCounts {
    pub monolingual: usize,
    pub parallel: usize,
    pub ok: usize,
    pub compile_error: usize,
    pub timeout: usize,
    pub skipped_too_long: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub files: usize,
    pub languages: BTreeMap<SourceLang, ShardCounts>,
}

fn io_err(path: &Path, source: std::io::Error) -> FrontendError {
    FrontendError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn language_of(path: &Path) -> Option<SourceLang> {
    match path.extension()?.to_str()? {
        "cpp" | "cc" | "cxx" => Some(SourceLang::Cpp),
        "rs" => Some(SourceLang::Rust),
        "go" => Some(SourceLang::Go),
        "java" => Some(SourceLang::Java),
        _ => None,
    }
}

fn walk(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), FrontendError> {
    if path.is_dir() {
        let entries = std::fs::read_dir(path).map_err(|e| io_err(path, e))?;
        for entry in entries {
            walk(&entry.map_err(|e| io_err(path, e))?.path(), out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Extracts, compiles and normalizes every function under `inputs`, writing
/// `mono.<lang>.jsonl` and `para.<lang>.jsonl` for each requested language.
///
/// Records are ordered by input path, then by byte offset.
pub fn build_corpus(
    inputs: &[PathBuf],
    languages: &[SourceLang],
    cfg: &FrontendConfig,
    norm: &NormalizationConfig,
    out_dir: &Path,
    opts: &CorpusOptions,
) -> Result<CorpusSummary, FrontendError> {
    cfg.validate()?;
    for &lang in languages {
        cfg.command(lang)?;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut files = Vec::new();
    for input in inputs {
        walk(input, &mut files)?;
    }
    files.retain(|p| language_of(p).is_some_and(|l| languages.contains(&l)));
    files.sort();
    files.dedup();

    let per_file = map_ordered(files.clone(), opts.jobs, |path| process_file(&path, cfg, norm, opts));
    let mut summary = CorpusSummary {
        files: files.len(),
        languages: languages.iter().map(|&l| (l, ShardCounts::default())).collect(),
    };
    let mut writers = BTreeMap::new();
    for &lang in languages {
        let open = |kind| {
            let p = shard_path(out_dir, kind, lang);
            std::fs::File::create(&p).map(BufWriter::new).map_err(|e| io_err(&p, e))
        };
        writers.insert(lang, (open(ShardKind::Monolingual)?, open(ShardKind::Parallel)?));
    }
    for records in per_file {
        for rec in records? {
            let LanguageTag::Source(lang) = rec.language else { continue };
            let counts = summary.languages.get_mut(&lang).expect("requested language");
            let (mono, para) = writers.get_mut(&lang).expect("requested language");
            let line = serde_json::to_string(&rec).expect("records serialize");
            writeln!(mono, "{line}").map_err(|e| io_err(out_dir, e))?;
            counts.monolingual += 1;
            match rec.compile_status {
                CompileStatus::Ok => counts.ok += 1,
                CompileStatus::CompileError(_) => counts.compile_error += 1,
                CompileStatus::Timeout => counts.timeout += 1,
                CompileStatus::SkippedTooLong => counts.skipped_too_long += 1,
                CompileStatus::Pending => unreachable!("every record is compiled or skipped"),
            }
            if rec.is_parallel() {
                writeln!(para, "{line}").map_err(|e| io_err(out_dir, e))?;
                counts.parallel += 1;
            }
        }
    }
    for (_, (mut mono, mut para)) in writers {
        mono.flush().map_err(|e| io_err(out_dir, e))?;
        para.flush().map_err(|e| io_err(out_dir, e))?;
    }
    let summary_path = out_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).expect("summary serializes"))
        .map_err(|e| io_err(&summary_path, e))?;
    Ok(summary)
}

fn process_file(
    path: &Path,
    cfg: &FrontendConfig,
    norm: &NormalizationConfig,
    opts: &CorpusOptions,
) -> Result<Vec<FunctionRecord>, FrontendError> {
    let lang = language_of(path).expect("filtered by extension");
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut out = Vec::new();
    for rec in extract_functions(&text, LanguageTag::Source(lang), path) {
        if let Some(max) = opts.max_tokens {
            let len = match &opts.vocab {
                Some(v) => v.encode_raw(&rec.source).map(|ids| ids.len()).unwrap_or(usize::MAX),
                None => pretokenize(rec.source.as_bytes()).len(),
            };
            if len > max {
                let mut rec = rec;
                rec.compile_status = CompileStatus::SkippedTooLong;
                out.push(rec);
                continue;
            }
        }
        let mut rec = compile_to_ir(&rec, cfg)?;
        if let Some(raw) = &rec.raw_ir {
            match normalize(raw, norm) {
                Ok(n) => rec.normalized_ir = Some(n),
                Err(e) => log::warn!("{}: normalization failed for {}: {e}", path.display(), rec.id),
            }
        }
        out.push(rec);
    }
    Ok(out)
}
