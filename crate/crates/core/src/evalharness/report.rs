use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{compute_ca, error_histogram, run_case, BleuStats, CaseStatus, EvalCase, EvalError, EvalSet, Problem, Toolchains};
use crate::lang::SourceLang;
use crate::pool::map_ordered;
use crate::tokenizer::{pretokenize, Vocab};
use crate::translator::Translator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub problem: String,
    /// The first candidate, as graded.
    pub candidate: String,
    /// One status per candidate, in candidate order.
    pub statuses: Vec<CaseStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub src: SourceLang,
    pub tgt: SourceLang,
    /// Why the direction was not graded, if it was not.
    pub skipped: Option<String>,
    pub k: usize,
    pub ca_at_1: f64,
    pub ca_at_k: f64,
    pub bleu: f64,
    pub errors: BTreeMap<String, usize>,
    pub cases: Vec<CaseResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub directions: Vec<DirectionReport>,
}

impl EvalReport {
    /// Mean CA@1 over graded directions.
    pub fn average_ca_at_1(&self) -> f64 {
        let graded: Vec<f64> = self.directions.iter().filter(|d| d.skipped.is_none()).map(|d| d.ca_at_1).collect();
        if graded.is_empty() {
            0.0
        } else {
            graded.iter().sum::<f64>() / graded.len() as f64
        }
    }

    /// Aligned plain-text table: one row per direction, then "to X" and
    /// "from X" averages and the overall average.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>7} {:>7} {:>7}  {}", "direction", "CA@1", "CA@k", "BLEU", "note");
        for d in &self.directions {
            let name = format!("{} -> {}", d.src, d.tgt);
            match &d.skipped {
                Some(why) => {
                    let _ = writeln!(out, "{name:<16} {:>7} {:>7} {:>7}  skipped: {why}", "-", "-", "-");
                }
                None => {
                    let _ = writeln!(
                        out,
                        "{name:<16} {:>7.2} {:>7.2} {:>7.2}  {} cases",
                        100.0 * d.ca_at_1,
                        100.0 * d.ca_at_k,
                        d.bleu,
                        d.cases.len()
                    );
                }
            }
        }
        let graded: Vec<&DirectionReport> = self.directions.iter().filter(|d| d.skipped.is_none()).collect();
        for lang in SourceLang::ALL {
            for (label, pick) in [("to", true), ("from", false)] {
                let sel: Vec<f64> = graded
                    .iter()
                    .filter(|d| if pick { d.tgt == lang } else { d.src == lang })
                    .map(|d| d.ca_at_1)
                    .collect();
                if !sel.is_empty() {
                    let avg = 100.0 * sel.iter().sum::<f64>() / sel.len() as f64;
                    let _ = writeln!(out, "{:<16} {avg:>7.2}", format!("{label} {lang}"));
                }
            }
        }
        if !graded.is_empty() {
            let _ = writeln!(out, "{:<16} {:>7.2}", "average", 100.0 * self.average_ca_at_1());
        }
        out
    }
}

/// Runs every reference against its own tests for the languages with a
/// usable toolchain; the first failure in problem order is returned.
pub fn validate_references(set: &EvalSet, toolchains: &Toolchains, jobs: usize) -> Result<(), EvalError> {
    let cases: Vec<&EvalCase> = set
        .problems
        .iter()
        .flat_map(|p| p.cases.values())
        .filter(|c| toolchains.get(c.lang).is_ok())
        .collect();
    let statuses = map_ordered(cases.clone(), jobs, |c| run_case(&c.reference, c, toolchains));
    for (case, status) in cases.into_iter().zip(statuses) {
        let status = status?;
        if !status.passed() {
            return Err(EvalError::ReferenceFails {
                problem: case.problem.clone(),
                lang: case.lang,
                status,
            });
        }
    }
    Ok(())
}

/// Ids for BLEU: BPE ids when a vocabulary is given, interned pre-tokens otherwise.
fn bleu_ids(text: &str, vocab: Option<&Vocab>, intern: &mut HashMap<Vec<u8>, u32>) -> Vec<u32> {
    if let Some(ids) = vocab.and_then(|v| v.encode_raw(text).ok()) {
        return ids;
    }
    pretokenize(text.as_bytes())
        .into_iter()
        .filter(|t| !t.iter().all(u8::is_ascii_whitespace))
        .map(|t| {
            let n = intern.len() as u32;
            *intern.entry(t.to_vec()).or_insert(n)
        })
        .collect()
}

/// Grades the candidates produced by `candidates(problem, src, tgt)` for every
/// direction. Directions whose target toolchain is missing are reported as skipped.
pub fn evaluate_with(
    set: &EvalSet,
    directions: &[(SourceLang, SourceLang)],
    k: usize,
    toolchains: &Toolchains,
    vocab: Option<&Vocab>,
    jobs: usize,
    candidates: &(dyn Fn(&Problem, SourceLang, SourceLang) -> Vec<String> + Sync),
) -> EvalReport {
    let k = k.max(1);
    let mut report = EvalReport::default();
    for &(src, tgt) in directions {
        let mut d = DirectionReport {
            src,
            tgt,
            skipped: None,
            k,
            ca_at_1: 0.0,
            ca_at_k: 0.0,
            bleu: 0.0,
            errors: BTreeMap::new(),
            cases: Vec::new(),
        };
        if let Err(e) = toolchains.get(tgt) {
            d.skipped = Some(e.to_string());
            report.directions.push(d);
            continue;
        }
        let problems: Vec<&Problem> = set
            .problems
            .iter()
            .filter(|p| p.cases.contains_key(&src) && p.cases.contains_key(&tgt))
            .collect();
        let results = map_ordered(problems, jobs, |p| {
            let case = &p.cases[&tgt];
            let mut cands = candidates(p, src, tgt);
            cands.truncate(k);
            if cands.is_empty() {
                cands.push(String::new());
            }
            let statuses = cands
                .iter()
                .map(|c| run_case(c, case, toolchains).unwrap_or(CaseStatus::RuntimeError))
                .collect();
            (
                CaseResult {
                    problem: p.id.clone(),
                    candidate: cands[0].clone(),
                    statuses,
                },
                case.reference.clone(),
            )
        });
        let mut intern = HashMap::new();
        let mut bleu = BleuStats::default();
        for (r, reference) in &results {
            let c = bleu_ids(&r.candidate, vocab, &mut intern);
            let rf = bleu_ids(reference, vocab, &mut intern);
            bleu.add(&BleuStats::of(&c, &rf));
        }
        let matrix: Vec<Vec<CaseStatus>> = results.iter().map(|(r, _)| r.statuses.clone()).collect();
        d.ca_at_1 = compute_ca(&matrix, 1);
        d.ca_at_k = compute_ca(&matrix, k);
        d.bleu = bleu.score();
        d.errors = error_histogram(matrix.iter().flat_map(|s| s.first()));
        d.cases = results.into_iter().map(|(r, _)| r).collect();
        report.directions.push(d);
    }
    report
}

/// Translates every case with `translator` (top `k` of one beam) and grades it.
pub fn evaluate(
    translator: &Translator,
    set: &EvalSet,
    directions: &[(SourceLang, SourceLang)],
    beam: usize,
    k: usize,
    toolchains: &Toolchains,
    jobs: usize,
) -> EvalReport {
    let produce = |p: &Problem, src: SourceLang, tgt: SourceLang| {
        translator
            .translate_k(&p.cases[&src].reference, src, tgt, beam, k)
            .unwrap_or_else(|e| {
                log::warn!("{}: translation {src} -> {tgt} failed: {e}", p.id);
                vec![String::new()]
            })
    };
    evaluate_with(set, directions, k, toolchains, Some(&translator.vocab), jobs, &produce)
}
