#![allow(dead_code)]

use codeir::lang::{LanguageTag, SourceLang};
use codeir::neural::{DecoderMode, Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CPP: LanguageTag = LanguageTag::Source(SourceLang::Cpp);
pub const RUST: LanguageTag = LanguageTag::Source(SourceLang::Rust);
pub const IR_CPP: LanguageTag = LanguageTag::Ir(SourceLang::Cpp);
pub const IR_RUST: LanguageTag = LanguageTag::Ir(SourceLang::Rust);

/// A dim-16, one-layer-each model over a small vocabulary.
pub fn tiny_config(vocab: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        dim: 16,
        heads: 2,
        ff_dim: 32,
        enc_layers: 1,
        dec_layers: 1,
        max_len: 48,
        decoder_mode: DecoderMode::Shared,
        seed,
        ..ModelConfig::default()
    }
}

pub fn tiny_model(vocab: usize, seed: u64) -> Model {
    Model::new(tiny_config(vocab, seed)).unwrap()
}

pub fn random_ids(rng: &mut ChaCha8Rng, len: usize, lo: u32, hi: u32) -> Vec<u32> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Compares `analytic` with central differences of `f` at `count` coordinates.
///
/// Coordinates are drawn from those with a nonzero analytic gradient (all of them if
/// fewer exist) so that the check exercises the computation path.
pub fn finite_difference_check(
    params: &[f64],
    analytic: &[f64],
    count: usize,
    seed: u64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> GradCheck {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nonzero: Vec<usize> = (0..analytic.len()).filter(|&i| analytic[i] != 0.0).collect();
    assert!(!nonzero.is_empty(), "gradient is identically zero");
    let coords: Vec<usize> = (0..count).map(|_| nonzero[rng.random_range(0..nonzero.len())]).collect();
    let mut p = params.to_vec();
    let mut max_rel_err: f64 = 0.0;
    for &i in &coords {
        let orig = p[i];
        p[i] = orig + H;
        let up = f(&p);
        p[i] = orig - H;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        max_rel_err = max_rel_err.max(rel);
    }
    GradCheck {
        max_rel_err,
        checked: coords.len(),
    }
}

/// Softmax cross-entropy written out directly from the definition.
pub fn naive_nll(logits: &[f64], vocab: usize, targets: &[u32]) -> f64 {
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = &logits[i * vocab..(i + 1) * vocab];
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
        total -= ((row[t as usize] - max).exp() / z).ln();
    }
    total
}

/// Straightforward BLEU-4: n-grams compared as vectors with quadratic counting.
/// Orders without candidate n-grams are dropped from the geometric mean.
pub fn oracle_bleu(pairs: &[(Vec<u32>, Vec<u32>)]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c_len, mut r_len) = (0, 0);
    for (c, r) in pairs {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=4 {
            if c.len() < n {
                continue;
            }
            let cand: Vec<&[u32]> = c.windows(n).collect();
            let refs: Vec<&[u32]> = if r.len() >= n { r.windows(n).collect() } else { vec![] };
            let mut seen: Vec<&[u32]> = Vec::new();
            for g in &cand {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g);
                let in_cand = cand.iter().filter(|x| *x == g).count();
                let in_ref = refs.iter().filter(|x| *x == g).count();
                matches[n - 1] += in_cand.min(in_ref);
            }
            totals[n - 1] += cand.len();
        }
    }
    let mut logs = Vec::new();
    for n in 0..4 {
        if totals[n] > 0 {
            if matches[n] == 0 {
                return 0.0;
            }
            logs.push((matches[n] as f64 / totals[n] as f64).ln());
        }
    }
    let bp = if c_len >= r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    100.0 * bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

/// Candidate/reference pairs over a small alphabet, candidates being noisy copies.
pub fn bleu_pairs(seed: u64, n: usize) -> Vec<(Vec<u32>, Vec<u32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(3..30);
            let r = random_ids(&mut rng, len, 0, 8);
            let mut c: Vec<u32> = r.iter().map(|&t| if rng.random_bool(0.2) { rng.random_range(0..8) } else { t }).collect();
            let cut = rng.random_range(0..4);
            c.truncate(c.len().saturating_sub(cut).max(1));
            if rng.random_bool(0.3) {
                c.extend(random_ids(&mut rng, 3, 0, 8));
            }
            (c, r)
        })
        .collect()
}
