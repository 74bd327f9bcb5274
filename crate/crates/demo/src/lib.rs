//! WebAssembly bindings for the browser playground in `www/`.

use std::collections::HashMap;

use codeir::irnorm::{normalize, NormalizationConfig};
use codeir::objectives::noise::{drop_tokens, local_shuffle, mask_tokens, span_mask};
use codeir::tokenizer::MASK;
use codeir::trainer::lr_at;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// Normalizes LLVM IR text with the selected passes.
#[wasm_bindgen]
pub fn normalize_ir(text: &str, strip: bool, canonicalize: bool, demangle: bool) -> Result<String, JsError> {
    let cfg = NormalizationConfig {
        strip_comments: strip,
        strip_debug: strip,
        strip_attributes: strip,
        canonicalize_blocks: canonicalize,
        canonicalize_temporaries: canonicalize,
        demangle,
        demangler_command: None,
    };
    normalize(text, &cfg).map_err(|e| JsError::new(&e.to_string()))
}

/// Whitespace-separated words as ids above the special range, plus the inverse table.
fn intern(text: &str) -> (Vec<u32>, Vec<String>) {
    let mut table: Vec<String> = Vec::new();
    let mut index: HashMap<&str, u32> = HashMap::new();
    let ids = text
        .split_whitespace()
        .map(|w| {
            *index.entry(w).or_insert_with(|| {
                table.push(w.to_string());
                100 + table.len() as u32 - 1
            })
        })
        .collect();
    (ids, table)
}

fn render(ids: &[u32], table: &[String]) -> String {
    ids.iter()
        .map(|&id| if id == MASK { "<mask>" } else { table[(id - 100) as usize].as_str() })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Applies one noise function to the words of `text`.
///
/// `mode` is `mlm` (independent masking at `rate`), `span` (Poisson spans with mean
/// `param` covering `rate` of the words), `drop` (deletion at `rate`) or `shuffle`
/// (local shuffle within a window of `param` positions).
#[wasm_bindgen]
pub fn corrupt(text: &str, mode: &str, rate: f64, param: f64, seed: u64) -> Result<String, JsError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(JsError::new("rate must be within [0, 1]"));
    }
    let (ids, table) = intern(text);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match mode {
        "mlm" => mask_tokens(&ids, rate, &mut rng).0,
        "span" => span_mask(&ids, rate, param.max(0.0), &mut rng).0,
        "drop" => drop_tokens(&ids, rate, &mut rng),
        "shuffle" => local_shuffle(&ids, param.max(0.0) as usize, &mut rng),
        other => return Err(JsError::new(&format!("unknown mode `{other}`"))),
    };
    Ok(render(&out, &table))
}

/// Learning rate at steps `0..=steps` for the warmup/inverse-square-root schedule.
#[wasm_bindgen]
pub fn lr_curve(base: f64, warmup: u64, steps: u64) -> Vec<f64> {
    (0..=steps).map(|s| lr_at(s, base, warmup)).collect()
}
