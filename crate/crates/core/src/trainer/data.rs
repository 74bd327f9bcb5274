use std::path::Path;

use crate::frontends::{read_shard, shard_path, FrontendError, FunctionRecord, ShardKind};
use crate::lang::SourceLang;
use crate::objectives::Sample;
use crate::tokenizer::{TokenizerError, Vocab};

/// Tokenized training records.
///
/// `mono` holds every usable function (with IR when it fits); `para` holds the
/// ones with IR, for the objectives that need it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainData {
    pub mono: Vec<Sample>,
    pub para: Vec<Sample>,
    /// Records left out because code or IR exceeded the length limit.
    pub skipped: usize,
}

impl TrainData {
    pub fn from_samples(samples: Vec<Sample>) -> Self {
        let para = samples.iter().filter(|s| s.ir.is_some()).cloned().collect();
        Self {
            mono: samples,
            para,
            skipped: 0,
        }
    }

    /// Tokenizes `records`, dropping code longer than `max_len` tokens and IR
    /// that does not fit next to its code in one `max_len` window.
    pub fn from_records(records: &[FunctionRecord], vocab: &Vocab, max_len: usize) -> Result<Self, TokenizerError> {
        let mut samples = Vec::new();
        let mut skipped = 0;
        for rec in records {
            let mut s = Sample::from_record(rec, vocab)?;
            if s.code.len() > max_len {
                skipped += 1;
                continue;
            }
            // Concatenated code ⊕ IR drops two frame tokens and adds SEP.
            if s.ir.as_ref().is_some_and(|z| s.code.len() + z.len() - 1 > max_len) {
                s.ir = None;
                skipped += 1;
            }
            samples.push(s);
        }
        let mut data = Self::from_samples(samples);
        data.skipped = skipped;
        Ok(data)
    }

    /// Reads the monolingual shards in `dir` for `languages` (every language
    /// when empty); parallel records are the monolingual ones that carry IR.
    pub fn load_dir(dir: &Path, languages: &[SourceLang], vocab: &Vocab, max_len: usize) -> Result<Self, LoadError> {
        let langs = if languages.is_empty() { &SourceLang::ALL[..] } else { languages };
        let mut records = Vec::new();
        for &lang in langs {
            let path = shard_path(dir, ShardKind::Monolingual, lang);
            if path.exists() {
                records.extend(read_shard(&path)?.into_iter().filter(|r| r.is_consistent()));
            }
        }
        for r in &mut records {
            if !r.is_parallel() {
                r.normalized_ir = None;
            }
        }
        Ok(Self::from_records(&records, vocab, max_len)?)
    }

    pub fn languages(&self) -> Vec<SourceLang> {
        SourceLang::ALL.into_iter().filter(|l| self.mono.iter().any(|s| s.lang == *l)).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Shard(#[from] FrontendError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}
