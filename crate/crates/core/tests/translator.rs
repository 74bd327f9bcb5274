mod common;

use std::fs;
use std::path::Path;

use codeir::frontends::{compile_to_ir, extract_functions, FrontendConfig};
use codeir::irnorm::{normalize, NormalizationConfig};
use codeir::lang::{LanguageTag, SourceLang};
use codeir::neural::{Checkpoint, DecodeOptions, DecoderMode, LossSpec, Model, ModelConfig, ModelInput};
use codeir::tokenizer::Vocab;
use codeir::trainer::{Adam, AdamConfig};
use codeir::translator::{TranslateError, Translator};
use common::*;

const CPP_SUB: &str = "int sub1(int a) { return a - 2; }";
const RUST_SUB: &str = "fn sub1(a: i32) -> i32 { a.wrapping_sub(2) }";
const ANSWER: &str = "int answer() { return 26 + 16; }";
const ANSWER_ALT: &str = "int answer() { return 39 + 3; }";

fn vocab() -> Vocab {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy/vocab.txt");
    Vocab::from_text(&fs::read_to_string(path).unwrap()).unwrap()
}

fn config(v: &Vocab, mode: DecoderMode) -> ModelConfig {
    ModelConfig {
        dim: 32,
        ff_dim: 64,
        max_len: 80,
        decoder_mode: mode,
        ..tiny_config(v.size(), 3)
    }
}

fn input(v: &Vocab, text: &str, tag: LanguageTag) -> ModelInput {
    ModelInput::from(&v.encode(text, tag).unwrap())
}

/// Trains on `pairs` until greedy decoding reproduces every target.
fn memorize(mut m: Model, pairs: &[(ModelInput, ModelInput)]) -> Model {
    let mut adam = Adam::new(AdamConfig::default(), m.param_count());
    let opts = DecodeOptions::text(m.config.max_len);
    for step in 0..3000 {
        if step % 50 == 0
            && pairs
                .iter()
                .all(|(s, t)| m.greedy_decode(s, t.tags[0], &opts).unwrap() == t.ids)
        {
            return m;
        }
        let mut g = vec![0.0; m.param_count()];
        for (s, t) in pairs {
            m.accumulate_grad(LossSpec::Sequence { src: s, tgt: t }, 1.0, &mut g).unwrap();
        }
        adam.update(&mut m.params, &g, 3e-3);
    }
    panic!("pairs not memorized");
}

fn normalized_ir(lang: SourceLang, source: &str) -> String {
    let rec = extract_functions(source, LanguageTag::Source(lang), Path::new("input")).remove(0);
    let rec = compile_to_ir(&rec, &FrontendConfig::desk_defaults()).unwrap();
    normalize(&rec.raw_ir.expect("compiles"), &NormalizationConfig::default()).unwrap()
}

#[test]
fn memorized_pair_translates_exactly_with_any_beam() {
    let v = vocab();
    let pair = (input(&v, CPP_SUB, CPP), input(&v, RUST_SUB, RUST));
    let t = Translator::from_model(memorize(Model::new(config(&v, DecoderMode::Shared)).unwrap(), &[pair]), v);
    assert_eq!(t.translate(CPP_SUB, SourceLang::Cpp, SourceLang::Rust, 1).unwrap(), RUST_SUB);
    assert_eq!(t.translate(CPP_SUB, SourceLang::Cpp, SourceLang::Rust, 5).unwrap(), RUST_SUB);
    let top = t.translate_k(CPP_SUB, SourceLang::Cpp, SourceLang::Rust, 5, 3).unwrap();
    assert_eq!(top.len(), 3);
    assert_eq!(top[0], RUST_SUB);
}

#[test]
fn same_language_is_rejected() {
    let v = vocab();
    let t = Translator::from_model(Model::new(config(&v, DecoderMode::Shared)).unwrap(), v);
    let err = t.translate(CPP_SUB, SourceLang::Cpp, SourceLang::Cpp, 1).unwrap_err();
    assert!(matches!(err, TranslateError::SameLanguage(SourceLang::Cpp)));
}

#[test]
fn translation_needs_no_frontend() {
    // Direct translation takes no frontend configuration at all; the pivot with an
    // empty one cannot compile anything.
    let v = vocab();
    let t = Translator::from_model(Model::new(config(&v, DecoderMode::Shared)).unwrap(), v);
    assert!(t.translate(CPP_SUB, SourceLang::Cpp, SourceLang::Rust, 2).is_ok());
    let err = t
        .pivot_translate(CPP_SUB, SourceLang::Cpp, SourceLang::Rust, &FrontendConfig::default(), &NormalizationConfig::default(), 1)
        .unwrap_err();
    assert!(matches!(err, TranslateError::CompileFailure(_)), "{err}");
}

#[test]
fn pivot_on_uncompilable_input_fails_without_fallback() {
    let v = vocab();
    let t = Translator::from_model(Model::new(config(&v, DecoderMode::Shared)).unwrap(), v);
    let err = t
        .pivot_translate(
            "int broken(int a) { return helper(a); }",
            SourceLang::Cpp,
            SourceLang::Rust,
            &FrontendConfig::desk_defaults(),
            &NormalizationConfig::default(),
            1,
        )
        .unwrap_err();
    assert!(matches!(err, TranslateError::CompileFailure(_)), "{err}");
}

#[test]
fn decompiling_memorized_ir_round_trips_through_the_frontend() {
    let v = vocab();
    let ir = normalized_ir(SourceLang::Cpp, ANSWER);
    assert_eq!(ir, normalized_ir(SourceLang::Cpp, ANSWER_ALT));
    let pair = (input(&v, &ir, IR_CPP), input(&v, ANSWER, CPP));
    let t = Translator::from_model(memorize(Model::new(config(&v, DecoderMode::Shared)).unwrap(), &[pair]), v);
    let norm = NormalizationConfig::default();

    let rec = extract_functions(ANSWER, CPP, Path::new("input")).remove(0);
    let raw = compile_to_ir(&rec, &FrontendConfig::desk_defaults()).unwrap().raw_ir.unwrap();
    let decompiled = t.decompile(&raw, SourceLang::Cpp, SourceLang::Cpp, Some(DecoderMode::Shared), &norm).unwrap();
    assert_eq!(decompiled, ANSWER);
    assert_eq!(normalized_ir(SourceLang::Cpp, &decompiled), ir);

    // The pivot only sees the IR, so both constant sources decode alike.
    let frontends = FrontendConfig::desk_defaults();
    let a = t.pivot_translate(ANSWER, SourceLang::Cpp, SourceLang::Cpp, &frontends, &norm, 1).unwrap();
    let b = t.pivot_translate(ANSWER_ALT, SourceLang::Cpp, SourceLang::Cpp, &frontends, &norm, 1).unwrap();
    assert_eq!(a, ANSWER);
    assert_eq!(a, b);
    assert_eq!(t.pivot_from_ir(&ir, SourceLang::Cpp, SourceLang::Cpp, 1).unwrap(), a);
}

#[test]
fn both_decoder_layouts_decode() {
    let v = vocab();
    let raw = "define i32 @f(i32 %0) {\n  %2 = add i32 %0, 1\n  ret i32 %2\n}\n";
    let norm = NormalizationConfig::default();
    for mode in [DecoderMode::Shared, DecoderMode::Separate] {
        let t = Translator::from_model(Model::new(config(&v, mode)).unwrap(), v.clone());
        t.decompile(raw, SourceLang::Cpp, SourceLang::Rust, Some(mode), &norm).unwrap();
        let other = if mode == DecoderMode::Shared { DecoderMode::Separate } else { DecoderMode::Shared };
        let err = t.decompile(raw, SourceLang::Cpp, SourceLang::Rust, Some(other), &norm).unwrap_err();
        assert!(matches!(err, TranslateError::DecoderModeMismatch { .. }));
    }
}

#[test]
fn malformed_ir_is_reported() {
    let v = vocab();
    let t = Translator::from_model(Model::new(config(&v, DecoderMode::Shared)).unwrap(), v);
    let err = t
        .decompile("define i32 @f() {\n", SourceLang::Cpp, SourceLang::Rust, None, &NormalizationConfig::default())
        .unwrap_err();
    assert!(matches!(err, TranslateError::MalformedIR(_)), "{err}");
}

#[test]
fn checkpoint_with_another_vocabulary_is_rejected() {
    let v = vocab();
    let m = Model::new(config(&v, DecoderMode::Shared)).unwrap();
    let ck = Checkpoint::from_model(&m, "some-other-vocabulary", 0);
    let err = Translator::new(&ck, v.clone()).unwrap_err();
    assert_eq!(codeir::Error::from(err).id(), "CheckpointMismatch");
    assert!(Translator::new(&Checkpoint::from_model(&m, &v.hash(), 0), v).is_ok());
}
