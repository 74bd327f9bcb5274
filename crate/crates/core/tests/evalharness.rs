mod common;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use codeir::evalharness::{
    compute_bleu, compute_ca, corpus_bleu, embedding_report, evaluate, evaluate_with, run_case, validate_references,
    CaseStatus, EvalError, EvalSet, Toolchains,
};
use codeir::lang::SourceLang;
use codeir::neural::Model;
use codeir::tokenizer::Vocab;
use codeir::translator::Translator;
use common::*;
use proptest::prelude::*;

const BOTH: [(SourceLang, SourceLang); 2] = [(SourceLang::Cpp, SourceLang::Rust), (SourceLang::Rust, SourceLang::Cpp)];

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn desk_set() -> EvalSet {
    EvalSet::load(&fixtures().join("evalset")).unwrap()
}

fn toy_vocab() -> Vocab {
    Vocab::from_text(&fs::read_to_string(fixtures().join("toy/vocab.txt")).unwrap()).unwrap()
}

#[test]
fn desk_set_shape() {
    let set = desk_set();
    assert!(set.problems.len() >= 40);
    assert_eq!(set.languages(), [SourceLang::Cpp, SourceLang::Rust]);
    assert!(set.problems.iter().all(|p| p.cases.len() == 2));
    assert!(set.mutations.len() >= 20);
}

#[test]
fn references_pass_their_own_tests() {
    let set = desk_set();
    let tc = Toolchains::default();
    validate_references(&set, &tc, 2).unwrap();
    let report = evaluate_with(&set, &BOTH, 1, &tc, None, 2, &|p, _, tgt| vec![p.cases[&tgt].reference.clone()]);
    for d in &report.directions {
        assert_eq!(d.skipped, None);
        assert_eq!(d.cases.len(), set.problems.len());
        assert_eq!(d.ca_at_1, 1.0, "{} -> {}", d.src, d.tgt);
        assert!((d.bleu - 100.0).abs() < 1e-9);
        assert!(d.errors.is_empty());
    }
}

#[test]
fn broken_reference_is_caught_at_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("problems/inc");
    fs::create_dir_all(&p).unwrap();
    fs::write(p.join("rust.src"), "fn inc(x: i32) -> i32 { x + 2 }\n").unwrap();
    fs::write(
        p.join("rust.test"),
        "{{CANDIDATE}}\nfn main() { if inc(1) != 2 { std::process::exit(1); } }\n",
    )
    .unwrap();
    let set = EvalSet::load(dir.path()).unwrap();
    let err = validate_references(&set, &Toolchains::default(), 1).unwrap_err();
    assert!(matches!(err, EvalError::ReferenceFails { status: CaseStatus::TestFailure, .. }), "{err}");
}

#[test]
fn single_token_mutations_fail() {
    let set = desk_set();
    let tc = Toolchains::default();
    let statuses: Vec<Vec<CaseStatus>> = set
        .mutations
        .iter()
        .map(|m| {
            let case = set.case(&m.problem, m.lang).unwrap();
            let mutated = m.apply(&case.reference).unwrap_or_else(|| panic!("{m:?} does not apply"));
            assert_ne!(mutated, case.reference);
            vec![run_case(&mutated, case, &tc).unwrap()]
        })
        .collect();
    for (m, s) in set.mutations.iter().zip(&statuses) {
        assert!(!s[0].passed(), "{}/{} `{}` -> `{}` still passes", m.problem, m.lang, m.from, m.to);
    }
    assert!(compute_ca(&statuses, 1) < 0.2);
}

#[test]
fn flipped_comparison_is_caught() {
    let set = desk_set();
    let case = set.case("abs_diff", SourceLang::Cpp).unwrap();
    let bad = case.reference.replacen('>', "<", 1);
    let status = run_case(&bad, case, &Toolchains::default()).unwrap();
    assert!(matches!(status, CaseStatus::TestFailure | CaseStatus::CompileError(_)), "{status:?}");
}

#[test]
fn compile_errors_carry_identifiers() {
    let set = desk_set();
    let case = set.case("abs_diff", SourceLang::Rust).unwrap();
    let status = run_case("fn abs_diff(a: i64, b: i64) -> i64 { \"no\" }", case, &Toolchains::default()).unwrap();
    assert_eq!(status, CaseStatus::CompileError(vec!["E0308".into()]));
}

#[test]
fn infinite_loop_times_out() {
    let set = desk_set();
    let case = set.case("abs_diff", SourceLang::Rust).unwrap();
    let tc = Toolchains {
        run_timeout_secs: 1.0,
        ..Toolchains::default()
    };
    let status = run_case("fn abs_diff(a: i64, b: i64) -> i64 { loop { std::hint::black_box(a + b); } }", case, &tc).unwrap();
    assert_eq!(status, CaseStatus::Timeout);
}

#[test]
fn missing_toolchain_skips_the_direction() {
    let set = desk_set();
    let mut tc = Toolchains::default();
    tc.languages.get_mut(&SourceLang::Rust).unwrap().probe = "no-such-compiler-here".into();
    let case = set.case("abs_diff", SourceLang::Rust).unwrap();
    assert!(matches!(run_case(&case.reference, case, &tc), Err(EvalError::ToolchainMissing(SourceLang::Rust))));

    let report = evaluate_with(&set, &BOTH, 1, &tc, None, 1, &|_, _, _| vec![String::new()]);
    assert_eq!(report.directions.len(), 2);
    assert!(report.directions[0].skipped.is_some());
    assert!(report.directions[0].cases.is_empty());
    assert!(report.directions[1].skipped.is_none());
    assert_eq!(report.directions[1].ca_at_1, 0.0);
    assert!(report.to_table().contains("skipped"));
}

#[test]
fn empty_direction_list_gives_empty_report() {
    let report = evaluate_with(&desk_set(), &[], 1, &Toolchains::default(), None, 1, &|_, _, _| unreachable!());
    assert!(report.directions.is_empty());
    assert_eq!(report.average_ca_at_1(), 0.0);
}

#[test]
fn grading_is_deterministic_and_histograms_conserve_counts() {
    let mut set = desk_set();
    set.problems.truncate(6);
    let tc = Toolchains::default();
    // Mixes passing, failing and non-compiling candidates.
    let produce = |p: &codeir::evalharness::Problem, _: SourceLang, tgt: SourceLang| {
        let r = &p.cases[&tgt].reference;
        match p.id.len() % 3 {
            0 => vec![r.clone()],
            1 => vec![r.replacen('{', "{ undefined_name;", 1)],
            _ => vec![r.replacen("return", "return 1 +", 1)],
        }
    };
    let a = evaluate_with(&set, &BOTH, 1, &tc, None, 2, &produce);
    let b = evaluate_with(&set, &BOTH, 1, &tc, None, 1, &produce);
    assert_eq!(a, b);
    for d in &a.directions {
        let ids: usize = d
            .cases
            .iter()
            .map(|c| match &c.statuses[0] {
                CaseStatus::CompileError(ids) => ids.len(),
                _ => 0,
            })
            .sum();
        assert_eq!(d.errors.values().sum::<usize>(), ids);
        assert!((0.0..=1.0).contains(&d.ca_at_1));
    }
}

#[test]
fn ca_examples() {
    use CaseStatus::*;
    assert_eq!(compute_ca(&[vec![Pass], vec![Pass], vec![Pass]], 1), 1.0);
    assert_eq!(compute_ca(&[vec![Pass], vec![TestFailure]], 1), 0.5);
    assert_eq!(compute_ca(&[vec![TestFailure, Pass]], 1), 0.0);
    assert_eq!(compute_ca(&[vec![TestFailure, Pass]], 2), 1.0);
}

fn status_strategy() -> impl Strategy<Value = CaseStatus> {
    prop_oneof![
        Just(CaseStatus::Pass),
        Just(CaseStatus::TestFailure),
        Just(CaseStatus::CompileError(vec!["E0308".into()])),
        Just(CaseStatus::RuntimeError),
        Just(CaseStatus::Timeout),
    ]
}

proptest! {
    #[test]
    fn ca_is_monotone_in_k(matrix in prop::collection::vec(prop::collection::vec(status_strategy(), 1..6), 1..12)) {
        let mut prev = 0.0;
        for k in 1..=6 {
            let ca = compute_ca(&matrix, k);
            prop_assert!((0.0..=1.0).contains(&ca));
            prop_assert!(ca >= prev);
            prev = ca;
        }
    }
}

#[test]
fn bleu_matches_an_independent_implementation() {
    let pairs = bleu_pairs(31, 40);
    let mut nonzero = 0;
    for (c, r) in &pairs {
        let got = compute_bleu(c, r).unwrap();
        let want = oracle_bleu(&[(c.clone(), r.clone())]);
        assert!((got - want).abs() < 1e-6, "{c:?} vs {r:?}: {got} != {want}");
        assert!((0.0..=100.0).contains(&got));
        nonzero += (got > 0.0) as usize;
    }
    assert!(nonzero >= 20);
    let corpus = corpus_bleu(pairs.iter().map(|(c, r)| (c.as_slice(), r.as_slice())));
    assert!((corpus - oracle_bleu(&pairs)).abs() < 1e-6);
}

#[test]
fn bleu_edge_cases() {
    let a = [4, 5, 6, 7, 8, 9];
    assert!((compute_bleu(&a, &a).unwrap() - 100.0).abs() < 1e-9);
    assert_eq!(compute_bleu(&a, &[10, 11, 12]).unwrap(), 0.0);
    assert!(matches!(compute_bleu(&a, &[]), Err(EvalError::EmptyInput)));
    assert!(matches!(compute_bleu(&[], &a), Err(EvalError::EmptyInput)));
}

fn sims(report: &[(String, f64)]) -> HashMap<&str, f64> {
    report.iter().map(|(t, s)| (t.as_str(), *s)).collect()
}

#[test]
fn embedding_report_properties() {
    let v = toy_vocab();
    let m = Model::new(tiny_config(v.size(), 21)).unwrap();
    let all = v.size();
    let a = embedding_report("return", &m, &v, all).unwrap();
    assert_eq!(a.len(), all);
    assert_eq!(a[0].0, "return");
    assert!((a[0].1 - 1.0).abs() < 1e-12);
    assert!(a.windows(2).all(|w| w[0].1 >= w[1].1));

    let b = embedding_report("i32", &m, &v, all).unwrap();
    assert!((sims(&a)["i32"] - sims(&b)["return"]).abs() < 1e-12);

    let again = Model::from_params(m.config.clone(), m.params.clone()).unwrap();
    assert_eq!(embedding_report("return", &again, &v, 10).unwrap(), a[..10]);
    assert!(matches!(embedding_report("no-such-token", &m, &v, 5), Err(EvalError::UnknownToken(_))));
}

#[test]
fn untrained_model_passes_nothing() {
    let v = toy_vocab();
    let cfg = codeir::neural::ModelConfig { max_len: 64, ..tiny_config(v.size(), 22) };
    let t = Translator::from_model(Model::new(cfg).unwrap(), v);
    let mut set = desk_set();
    set.problems.truncate(8);
    let report = evaluate(&t, &set, &BOTH, 1, 1, &Toolchains::default(), 2);
    for d in &report.directions {
        assert_eq!(d.skipped, None);
        assert_eq!(d.ca_at_1, 0.0);
        assert!(d.cases.iter().all(|c| !c.statuses[0].passed()));
    }
}
