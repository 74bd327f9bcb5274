mod common;

use codeir::lang::LanguageTag;
use codeir::neural::layers::gelu;
use codeir::neural::{
    cross_entropy, Checkpoint, DecodeOptions, DecoderMode, LossSpec, Model, ModelConfig, ModelInput, NeuralError,
    OptimizerState,
};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zero_tensor(m: &mut Model, name: &str) {
    let r = m.tensor(name).unwrap().range();
    m.params[r].fill(0.0);
}

fn set_tensor(m: &mut Model, name: &str, values: &[f64]) {
    let r = m.tensor(name).unwrap().range();
    assert_eq!(r.len(), values.len(), "{name}");
    m.params[r].copy_from_slice(values);
}

#[test]
fn encoder_states_are_deterministic() {
    let m = tiny_model(40, 1);
    let input = ModelInput::uniform(vec![1, 20, 21, 22, 2], CPP);
    let a = m.encode_states(&input).unwrap();
    let b = m.encode_states(&input).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 5 * 16);
}

#[test]
fn swapping_language_rows_and_tags_is_invisible() {
    let m = tiny_model(40, 2);
    let input = ModelInput::uniform(vec![1, 17, 30, 2], CPP);
    let before = m.encode_states(&input).unwrap();

    let mut swapped = m.clone();
    let lang = swapped.tensor("lang_emb").unwrap().clone();
    let d = swapped.config.dim;
    let (i, j) = (CPP.index(), IR_RUST.index());
    for k in 0..d {
        swapped.params.swap(lang.offset + i * d + k, lang.offset + j * d + k);
    }
    let relabeled = ModelInput::uniform(input.ids.clone(), IR_RUST);
    assert_eq!(swapped.encode_states(&relabeled).unwrap(), before);
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(j, v)| (v - mean) / (var + 1e-5).sqrt() * g[j] + b[j])
        .collect()
}

fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let dout = b.len();
    (0..dout)
        .map(|o| b[o] + x.iter().enumerate().map(|(i, xi)| xi * w[i * dout + o]).sum::<f64>())
        .collect()
}

#[test]
fn single_token_forward_matches_hand_computation() {
    let cfg = ModelConfig {
        vocab_size: 20,
        dim: 4,
        heads: 1,
        ff_dim: 4,
        enc_layers: 1,
        dec_layers: 1,
        max_len: 4,
        ..ModelConfig::default()
    };
    let mut m = Model::new(cfg).unwrap();
    // Hand-set every encoder tensor with a simple closed-form pattern.
    let names: Vec<String> = m.tensors().iter().map(|t| t.name.clone()).collect();
    for (k, name) in names.iter().enumerate() {
        let len = m.tensor(name).unwrap().len();
        let vals: Vec<f64> = (0..len).map(|i| ((i + 3 * k) % 7) as f64 * 0.1 - 0.3).collect();
        set_tensor(&mut m, name, &vals);
    }
    let p = |name: &str| m.params[m.tensor(name).unwrap().range()].to_vec();
    let (tok, pos, lang) = (p("tok_emb"), p("pos_emb"), p("lang_emb"));
    let id = 17usize;
    let x: Vec<f64> = (0..4).map(|j| tok[id * 4 + j] + pos[j] + lang[CPP.index() * 4 + j]).collect();
    let a = layer_norm(&x, &p("enc.0.ln1.g"), &p("enc.0.ln1.b"));
    // One key: the softmax weight is 1, so attention returns the value row.
    let v = affine(&a, &p("enc.0.attn.v.w"), &p("enc.0.attn.v.b"));
    let s = affine(&v, &p("enc.0.attn.o.w"), &p("enc.0.attn.o.b"));
    let x1: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
    let b = layer_norm(&x1, &p("enc.0.ln2.g"), &p("enc.0.ln2.b"));
    let hidden: Vec<f64> = affine(&b, &p("enc.0.ffn.fc1.w"), &p("enc.0.ffn.fc1.b")).into_iter().map(gelu).collect();
    let f = affine(&hidden, &p("enc.0.ffn.fc2.w"), &p("enc.0.ffn.fc2.b"));
    let x2: Vec<f64> = x1.iter().zip(&f).map(|(a, b)| a + b).collect();
    let want = layer_norm(&x2, &p("enc.ln.g"), &p("enc.ln.b"));

    let got = m.encode_states(&ModelInput::uniform(vec![id as u32], CPP)).unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
    }
}

fn uniform_logit_model(vocab: usize) -> Model {
    let mut m = tiny_model(vocab, 3);
    zero_tensor(&mut m, "tok_emb");
    zero_tensor(&mut m, "out_bias");
    m
}

#[test]
fn uniform_logits_give_closed_form_losses() {
    let m = uniform_logit_model(16);
    let src = ModelInput::uniform(vec![1, 5, 6, 2], CPP);
    let tgt = ModelInput::uniform(vec![1, 7, 8, 9, 2], RUST);
    let r = m.loss(LossSpec::Sequence { src: &src, tgt: &tgt }).unwrap();
    assert_eq!(r.tokens, 4);
    assert!((r.loss - 4.0 * 16f64.ln()).abs() < 1e-12, "{}", r.loss);

    let input = ModelInput::uniform(vec![3, 3, 3, 3, 3], CPP);
    let targets: Vec<(usize, u32)> = (0..5).map(|i| (i, 9)).collect();
    let r = m.loss(LossSpec::Masked { input: &input, targets: &targets }).unwrap();
    assert!((r.loss - 5.0 * 16f64.ln()).abs() < 1e-12);
}

#[test]
fn confident_correct_logits_have_zero_loss() {
    let mut logits = vec![0.0; 3 * 5];
    let targets = [Some(1), Some(4), Some(0)];
    for (i, t) in targets.iter().enumerate() {
        logits[i * 5 + t.unwrap() as usize] = 1e3;
    }
    let (loss, tokens, _) = cross_entropy(&logits, 5, &targets, false);
    assert_eq!(tokens, 3);
    assert_eq!(loss, 0.0);
}

#[test]
fn empty_mask_set_is_an_error() {
    let m = tiny_model(30, 4);
    let input = ModelInput::uniform(vec![1, 20, 2], CPP);
    assert_eq!(m.loss(LossSpec::Masked { input: &input, targets: &[] }), Err(NeuralError::EmptyMaskSet));
}

#[test]
fn too_long_sequences_are_rejected() {
    let m = tiny_model(30, 4);
    let long = ModelInput::uniform(vec![20; 49], CPP);
    let ok = ModelInput::uniform(vec![1, 20, 2], RUST);
    assert!(matches!(m.encode_states(&long), Err(NeuralError::SequenceTooLong { len: 49, max: 48 })));
    assert!(matches!(
        m.loss(LossSpec::Sequence { src: &ok, tgt: &long }),
        Err(NeuralError::SequenceTooLong { .. })
    ));
}

#[test]
fn sequence_loss_matches_naive_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for seed in 0..20 {
        let m = tiny_model(50, seed);
        let src = ModelInput::uniform([vec![1], random_ids(&mut rng, 6, 16, 50), vec![2]].concat(), CPP);
        let tgt = ModelInput::uniform([vec![1], random_ids(&mut rng, 5, 16, 50), vec![2]].concat(), IR_CPP);
        let report = m.loss(LossSpec::Sequence { src: &src, tgt: &tgt }).unwrap();
        let logits = m.decoder_logits(&src, &ModelInput::uniform(tgt.ids[..tgt.len() - 1].to_vec(), IR_CPP)).unwrap();
        let oracle = naive_nll(&logits, 50, &tgt.ids[1..]);
        assert!((report.loss - oracle).abs() < 1e-10, "seed {seed}: {} vs {oracle}", report.loss);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let m = tiny_model(40, 5);
    let src = ModelInput {
        ids: vec![1, 20, 21, 4, 30, 31, 2],
        tags: vec![CPP, CPP, CPP, IR_CPP, IR_CPP, IR_CPP, IR_CPP],
    };
    let tgt = ModelInput::uniform(vec![1, 25, 26, 27, 2], RUST);
    let (_, g) = m.grad(LossSpec::Sequence { src: &src, tgt: &tgt }, 1.0).unwrap();
    let check = finite_difference_check(&m.params, &g, 100, 1, |p| {
        let mm = Model::from_params(m.config.clone(), p.to_vec()).unwrap();
        mm.loss(LossSpec::Sequence { src: &src, tgt: &tgt }).unwrap().loss
    });
    assert!(check.max_rel_err < 1e-3, "sequence: {}", check.max_rel_err);

    let targets = vec![(1, 20), (4, 30)];
    let masked = ModelInput {
        ids: vec![1, 3, 21, 4, 3, 31, 2],
        tags: src.tags.clone(),
    };
    let (_, g) = m.grad(LossSpec::Masked { input: &masked, targets: &targets }, 1.0).unwrap();
    let check = finite_difference_check(&m.params, &g, 100, 2, |p| {
        let mm = Model::from_params(m.config.clone(), p.to_vec()).unwrap();
        mm.loss(LossSpec::Masked { input: &masked, targets: &targets }).unwrap().loss
    });
    assert!(check.max_rel_err < 1e-3, "masked: {}", check.max_rel_err);
}

#[test]
fn parameters_off_the_path_get_zero_gradient() {
    let m = tiny_model(40, 6);
    let input = ModelInput::uniform(vec![1, 3, 21, 2], CPP);
    let (_, g) = m.grad(LossSpec::Masked { input: &input, targets: &[(1, 20)] }, 1.0).unwrap();
    for t in m.tensors().iter().filter(|t| t.name.starts_with("dec")) {
        assert!(g[t.range()].iter().all(|&x| x == 0.0), "{}", t.name);
    }
    let lang = m.tensor("lang_emb").unwrap();
    let rust_row = lang.offset + RUST.index() * 16;
    assert!(g[rust_row..rust_row + 16].iter().all(|&x| x == 0.0));

    let sep = Model::new(ModelConfig {
        decoder_mode: DecoderMode::Separate,
        ..tiny_config(40, 6)
    })
    .unwrap();
    let src = ModelInput::uniform(vec![1, 20, 2], CPP);
    let tgt = ModelInput::uniform(vec![1, 21, 2], RUST);
    let (_, g) = sep.grad(LossSpec::Sequence { src: &src, tgt: &tgt }, 1.0).unwrap();
    let rust_dec = format!("dec{}.", RUST.language().index());
    for t in sep.tensors().iter().filter(|t| t.name.starts_with("dec")) {
        let touched = g[t.range()].iter().any(|&x| x != 0.0);
        if !t.name.starts_with(&rust_dec) {
            assert!(!touched, "{}", t.name);
        }
    }
}

#[test]
fn gradient_is_linear_in_scale() {
    let m = tiny_model(40, 7);
    let src = ModelInput::uniform(vec![1, 20, 22, 2], CPP);
    let tgt = ModelInput::uniform(vec![1, 23, 2], RUST);
    let spec = LossSpec::Sequence { src: &src, tgt: &tgt };
    let (_, g1) = m.grad(spec, 1.0).unwrap();
    let (_, g2) = m.grad(spec, 2.0).unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn decoder_is_causal() {
    let m = tiny_model(40, 8);
    let src = ModelInput::uniform(vec![1, 20, 21, 2], CPP);
    let base = vec![1, 22, 23, 24, 25];
    let logits = m.decoder_logits(&src, &ModelInput::uniform(base.clone(), RUST)).unwrap();
    for j in 1..base.len() {
        let mut changed = base.clone();
        changed[j] = 30;
        let other = m.decoder_logits(&src, &ModelInput::uniform(changed, RUST)).unwrap();
        // Row i predicts token i+1, so rows before j cannot see position j.
        assert_eq!(&logits[..j * 40], &other[..j * 40], "position {j}");
        assert_ne!(&logits[j * 40..], &other[j * 40..]);
    }
}

#[test]
fn hand_set_model_follows_known_argmax_chain() {
    let cfg = ModelConfig {
        vocab_size: 4,
        dim: 4,
        heads: 1,
        ff_dim: 4,
        enc_layers: 1,
        dec_layers: 1,
        max_len: 8,
        ..ModelConfig::default()
    };
    let mut m = Model::new(cfg).unwrap();
    m.params.fill(0.0);
    for t in m.tensors().to_vec() {
        if t.name.ends_with(".g") {
            m.params[t.range()].fill(1.0);
        }
    }
    // Token t embeds as e_t; position i pushes strongly toward e_{(i+2) mod 4}.
    let tok = m.tensor("tok_emb").unwrap().offset;
    for t in 0..4 {
        m.params[tok + t * 4 + t] = 1.0;
    }
    let pos = m.tensor("pos_emb").unwrap().offset;
    for i in 0..8 {
        m.params[pos + i * 4 + (i + 2) % 4] = 10.0;
    }
    let opts = DecodeOptions {
        bos: 0,
        eos: None,
        max_len: 4,
        banned: vec![],
    };
    let src = ModelInput::uniform(vec![1, 2], CPP);
    let out = m.greedy_decode(&src, RUST, &opts).unwrap();
    assert_eq!(out, vec![0, 2, 3, 0, 1]);
}

#[test]
fn greedy_decoding_is_deterministic_and_equals_beam_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = tiny_model(40, 9);
    let opts = DecodeOptions::text(12);
    for _ in 0..100 {
        let src = ModelInput::uniform([vec![1], random_ids(&mut rng, 5, 16, 40), vec![2]].concat(), CPP);
        let g1 = m.greedy_decode(&src, RUST, &opts).unwrap();
        let g2 = m.greedy_decode(&src, RUST, &opts).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(m.beam_decode(&src, RUST, 1, &opts).unwrap(), g1);
    }
}

#[test]
fn wide_beam_matches_exhaustive_enumeration() {
    let cfg = ModelConfig {
        vocab_size: 4,
        max_len: 8,
        ..tiny_config(4, 0)
    };
    let opts = DecodeOptions {
        bos: 0,
        eos: None,
        max_len: 3,
        banned: vec![],
    };
    for seed in 0..5 {
        let m = Model::new(ModelConfig { seed, ..cfg.clone() }).unwrap();
        let src = ModelInput::uniform(vec![1, 2, 3], CPP);
        let mut best: Option<(f64, Vec<u32>)> = None;
        for code in 0..64u32 {
            let seq = vec![0, code / 16, (code / 4) % 4, code % 4];
            let logits = m.decoder_logits(&src, &ModelInput::uniform(seq[..3].to_vec(), RUST)).unwrap();
            let lp = -naive_nll(&logits, 4, &seq[1..]);
            if best.as_ref().is_none_or(|(b, _)| lp > *b) {
                best = Some((lp, seq));
            }
        }
        let (best_lp, best_seq) = best.unwrap();
        let hyps = m.beam_search(&src, RUST, 16, &opts).unwrap();
        assert_eq!(hyps[0].ids, best_seq, "seed {seed}");
        assert!((hyps[0].logprob - best_lp).abs() < 1e-9);
        assert!(hyps.iter().all(|h| h.score <= hyps[0].score));
    }
}

#[test]
fn checkpoint_roundtrip_is_byte_exact() {
    let m = tiny_model(40, 12);
    let mut ck = Checkpoint::from_model(&m, "abc", 7);
    ck.optimizer = Some(OptimizerState {
        m: vec![0.5; m.param_count()],
        v: vec![0.25; m.param_count()],
    });
    ck.extra = serde_json::json!({"note": 1});
    let bytes = ck.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert!(matches!(back.expect_vocab("other"), Err(NeuralError::CheckpointMismatch { .. })));
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn language_table_has_a_row_per_tag() {
    let m = tiny_model(40, 0);
    assert_eq!(m.tensor("lang_emb").unwrap().shape, vec![LanguageTag::COUNT, 16]);
}
