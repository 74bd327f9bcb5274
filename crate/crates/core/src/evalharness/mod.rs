//! Computational accuracy: candidates are compiled into a per-problem test
//! program and run. Also BLEU, a compiler-error histogram and an embedding
//! neighbourhood report.
//!
//! An eval set is a directory `problems/<id>/<lang>.src` (reference function)
//! plus `problems/<id>/<lang>.test` (a program containing the literal marker
//! `{{CANDIDATE}}`, exiting 0 when every check passes and 1 when one fails).

pub mod bleu;
#[cfg(feature = "native")]
mod report;
#[cfg(feature = "native")]
mod sandbox;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use bleu::{compute_bleu, corpus_bleu, BleuStats};
#[cfg(feature = "native")]
pub use report::{evaluate, evaluate_with, validate_references, DirectionReport, EvalReport};
#[cfg(feature = "native")]
pub use sandbox::{run_case, Toolchain, Toolchains};

use crate::lang::SourceLang;
use crate::neural::Model;
use crate::tokenizer::Vocab;

pub const CANDIDATE_MARKER: &str = "{{CANDIDATE}}";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no toolchain available for {0}")]
    ToolchainMissing(SourceLang),
    #[error("BLEU needs non-empty candidate and reference")]
    EmptyInput,
    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("invalid eval set: {0}")]
    InvalidSet(String),
    #[error("reference of {problem}/{lang} fails its own tests: {status:?}")]
    ReferenceFails { problem: String, lang: SourceLang, status: CaseStatus },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub problem: String,
    pub lang: SourceLang,
    pub reference: String,
    pub template: String,
}

impl EvalCase {
    pub fn program(&self, candidate: &str) -> String {
        self.template.replace(CANDIDATE_MARKER, candidate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", content = "errors", rename_all = "snake_case")]
pub enum CaseStatus {
    Pass,
    TestFailure,
    /// Error identifiers scraped from the diagnostics.
    CompileError(Vec<String>),
    RuntimeError,
    Timeout,
}

impl CaseStatus {
    pub fn name(&self) -> &'static str {
        match self {
            CaseStatus::Pass => "pass",
            CaseStatus::TestFailure => "test_failure",
            CaseStatus::CompileError(_) => "compile_error",
            CaseStatus::RuntimeError => "runtime_error",
            CaseStatus::Timeout => "timeout",
        }
    }

    pub fn passed(&self) -> bool {
        *self == CaseStatus::Pass
    }
}

/// One problem: its reference and test program per language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub id: String,
    pub cases: BTreeMap<SourceLang, EvalCase>,
}

/// A single-token edit of one reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub problem: String,
    pub lang: SourceLang,
    pub from: String,
    pub to: String,
    /// Which occurrence of `from` to replace (0-based).
    #[serde(default)]
    pub occurrence: usize,
}

impl Mutation {
    pub fn apply(&self, text: &str) -> Option<String> {
        let (pos, _) = text.match_indices(&self.from).nth(self.occurrence)?;
        Some(format!("{}{}{}", &text[..pos], self.to, &text[pos + self.from.len()..]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSet {
    pub root: PathBuf,
    pub problems: Vec<Problem>,
    /// From `mutations.json` next to `problems/`, when present.
    pub mutations: Vec<Mutation>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl EvalSet {
    pub fn load(root: &Path) -> Result<EvalSet, EvalError> {
        let dir = root.join("problems");
        let mut ids: Vec<String> = std::fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        let mut problems = Vec::new();
        for id in ids {
            let pdir = dir.join(&id);
            let mut cases = BTreeMap::new();
            for lang in SourceLang::ALL {
                let src = pdir.join(format!("{lang}.src"));
                let test = pdir.join(format!("{lang}.test"));
                match (src.exists(), test.exists()) {
                    (true, true) => {
                        let reference = std::fs::read_to_string(&src).map_err(io(&src))?;
                        let template = std::fs::read_to_string(&test).map_err(io(&test))?;
                        if !template.contains(CANDIDATE_MARKER) {
                            return Err(EvalError::InvalidSet(format!("{} lacks {CANDIDATE_MARKER}", test.display())));
                        }
                        cases.insert(
                            lang,
                            EvalCase {
                                problem: id.clone(),
                                lang,
                                reference: reference.trim_end().to_string(),
                                template,
                            },
                        );
                    }
                    (false, false) => {}
                    _ => return Err(EvalError::InvalidSet(format!("{id}/{lang}: .src and .test must come together"))),
                }
            }
            if !cases.is_empty() {
                problems.push(Problem { id, cases });
            }
        }
        let mpath = root.join("mutations.json");
        let mutations = if mpath.exists() {
            let text = std::fs::read_to_string(&mpath).map_err(io(&mpath))?;
            serde_json::from_str(&text).map_err(|e| EvalError::InvalidSet(format!("mutations.json: {e}")))?
        } else {
            Vec::new()
        };
        Ok(EvalSet {
            root: root.to_path_buf(),
            problems,
            mutations,
        })
    }

    pub fn case(&self, problem: &str, lang: SourceLang) -> Option<&EvalCase> {
        self.problems.iter().find(|p| p.id == problem)?.cases.get(&lang)
    }

    pub fn languages(&self) -> Vec<SourceLang> {
        SourceLang::ALL
            .into_iter()
            .filter(|l| self.problems.iter().any(|p| p.cases.contains_key(l)))
            .collect()
    }
}

/// Fraction of cases where one of the first `k` candidates passes.
pub fn compute_ca(statuses: &[Vec<CaseStatus>], k: usize) -> f64 {
    if statuses.is_empty() {
        return 0.0;
    }
    let hits = statuses.iter().filter(|c| c.iter().take(k).any(CaseStatus::passed)).count();
    hits as f64 / statuses.len() as f64
}

/// Counts of compiler error identifiers over all compile failures.
pub fn error_histogram<'a>(statuses: impl IntoIterator<Item = &'a CaseStatus>) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for s in statuses {
        if let CaseStatus::CompileError(ids) = s {
            for id in ids {
                *h.entry(id.clone()).or_insert(0) += 1;
            }
        }
    }
    h
}

/// The `k` tokens whose embeddings are most cosine-similar to `token`'s,
/// ties broken by lower token id. The token itself is included.
pub fn embedding_report(token: &str, model: &Model, vocab: &Vocab, k: usize) -> Result<Vec<(String, f64)>, EvalError> {
    let id = vocab
        .token_id(token.as_bytes())
        .ok_or_else(|| EvalError::UnknownToken(token.to_string()))?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let q = model.token_embedding(id);
    let qn = norm(q);
    let mut sims: Vec<(u32, f64)> = (0..vocab.size().min(model.config.vocab_size) as u32)
        .map(|t| {
            let e = model.token_embedding(t);
            let denom = qn * norm(e);
            let dot: f64 = q.iter().zip(e).map(|(a, b)| a * b).sum();
            (t, if denom > 0.0 { dot / denom } else { 0.0 })
        })
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(sims.into_iter().take(k).map(|(t, s)| (vocab.token_text(t), s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ca_counts_any_pass_in_prefix() {
        use CaseStatus::*;
        let m = vec![vec![TestFailure, Pass], vec![Pass], vec![Timeout, RuntimeError]];
        assert!((compute_ca(&m, 1) - 1.0 / 3.0).abs() < 1e-12);
        assert!((compute_ca(&m, 2) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(compute_ca(&[vec![Pass], vec![Pass]], 1), 1.0);
    }

    #[test]
    fn mutation_targets_one_occurrence() {
        let m = Mutation {
            problem: "p".into(),
            lang: SourceLang::Cpp,
            from: "+".into(),
            to: "-".into(),
            occurrence: 1,
        };
        assert_eq!(m.apply("a + b + c").unwrap(), "a + b - c");
        assert!(Mutation { occurrence: 5, ..m }.apply("a + b").is_none());
    }

    #[test]
    fn histogram_sums_identifiers() {
        let s = [
            CaseStatus::CompileError(vec!["E0308".into(), "E0425".into()]),
            CaseStatus::CompileError(vec!["E0308".into()]),
            CaseStatus::Pass,
        ];
        let h = error_histogram(&s);
        assert_eq!(h["E0308"], 2);
        assert_eq!(h["E0425"], 1);
    }
}
