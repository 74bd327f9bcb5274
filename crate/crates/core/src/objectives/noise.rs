//! Corruption functions: token masking and the denoising noise model.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::tokenizer::{is_special, BOS, EOS, MASK, RESERVED};

/// How a selected position is rewritten.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Every selected token becomes `MASK`.
    #[default]
    Mask,
    /// 80% `MASK`, 10% a random ordinary token, 10% unchanged.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub mlm_mask_rate: f64,
    /// Rate for the IR segment of TLM inputs; `None` uses `mlm_mask_rate`.
    pub tlm_ir_mask_rate: Option<f64>,
    pub ae_mask_rate: f64,
    /// Mean span length λ of the Poisson span masker.
    pub span_length_mean: f64,
    pub token_drop_rate: f64,
    pub shuffle_window: usize,
    pub mask_policy: MaskPolicy,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            mlm_mask_rate: 0.15,
            tlm_ir_mask_rate: None,
            ae_mask_rate: 0.20,
            span_length_mean: 3.0,
            token_drop_rate: 0.1,
            shuffle_window: 3,
            mask_policy: MaskPolicy::Mask,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// No masking, dropping or shuffling at all.
    pub fn none() -> Self {
        Self {
            mlm_mask_rate: 0.0,
            tlm_ir_mask_rate: None,
            ae_mask_rate: 0.0,
            span_length_mean: 0.0,
            token_drop_rate: 0.0,
            shuffle_window: 0,
            mask_policy: MaskPolicy::Mask,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let rates = [
            ("mlm_mask_rate", self.mlm_mask_rate),
            ("tlm_ir_mask_rate", self.tlm_ir_mask_rate.unwrap_or(0.0)),
            ("ae_mask_rate", self.ae_mask_rate),
            ("token_drop_rate", self.token_drop_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("{name} must lie in [0, 1], got {r}"));
            }
        }
        if self.ae_mask_rate > 0.0 && !(self.span_length_mean > 0.0 && self.span_length_mean.is_finite()) {
            return Err(format!("span_length_mean must be positive, got {}", self.span_length_mean));
        }
        Ok(())
    }
}

/// Selects each non-special position with probability `rate` and replaces it by `MASK`.
pub fn mask_tokens<R: Rng + ?Sized>(ids: &[u32], rate: f64, rng: &mut R) -> (Vec<u32>, Vec<usize>) {
    mask_with(ids, |_| rate, MaskPolicy::Mask, 0, rng)
}

/// Masking with a per-position rate and a replacement policy.
///
/// `vocab_size` is only consulted by [`MaskPolicy::Mixed`].
pub fn mask_with<R: Rng + ?Sized>(
    ids: &[u32],
    rate: impl Fn(usize) -> f64,
    policy: MaskPolicy,
    vocab_size: usize,
    rng: &mut R,
) -> (Vec<u32>, Vec<usize>) {
    let mut out = ids.to_vec();
    let mut positions = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        if is_special(id) || rng.random::<f64>() >= rate(i) {
            continue;
        }
        positions.push(i);
        out[i] = match policy {
            MaskPolicy::Mask => MASK,
            MaskPolicy::Mixed => {
                let u: f64 = rng.random();
                if u < 0.8 || vocab_size <= RESERVED as usize {
                    MASK
                } else if u < 0.9 {
                    rng.random_range(RESERVED..vocab_size as u32)
                } else {
                    id
                }
            }
        };
    }
    (out, positions)
}

/// Masks whole spans with Poisson(λ) lengths until `round(rate·n)` positions are covered.
///
/// Returns the masked content and the sorted masked positions.
pub fn span_mask<R: Rng + ?Sized>(content: &[u32], rate: f64, lambda: f64, rng: &mut R) -> (Vec<u32>, Vec<usize>) {
    let n = content.len();
    let target = ((rate * n as f64).round() as usize).min(n);
    let mut masked = vec![false; n];
    let mut covered = 0;
    if target > 0 {
        let poisson = (lambda > 0.0).then(|| Poisson::new(lambda).expect("positive mean"));
        let mut attempts = 0;
        while covered < target && attempts < 64 * n {
            attempts += 1;
            let drawn = poisson.as_ref().map_or(1.0, |p| p.sample(rng)) as usize;
            let len = drawn.max(1).min(target - covered);
            let start = rng.random_range(0..=n - len);
            for m in &mut masked[start..start + len] {
                if !*m {
                    *m = true;
                    covered += 1;
                }
            }
        }
        // Overlap-heavy draws can stall near full coverage; finish left to right.
        for m in masked.iter_mut() {
            if covered >= target {
                break;
            }
            if !*m {
                *m = true;
                covered += 1;
            }
        }
    }
    let out = content.iter().zip(&masked).map(|(&t, &m)| if m { MASK } else { t }).collect();
    let positions = masked.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    (out, positions)
}

/// Removes each token independently with probability `rate`.
pub fn drop_tokens<R: Rng + ?Sized>(content: &[u32], rate: f64, rng: &mut R) -> Vec<u32> {
    content.iter().copied().filter(|_| rng.random::<f64>() >= rate).collect()
}

/// Sorts positions by `i + U[0, w+1)`, which moves no token more than `w` places.
pub fn local_shuffle<R: Rng + ?Sized>(content: &[u32], window: usize, rng: &mut R) -> Vec<u32> {
    let mut keyed: Vec<(f64, u32)> = content
        .iter()
        .enumerate()
        .map(|(i, &t)| (i as f64 + rng.random::<f64>() * (window as f64 + 1.0), t))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, t)| t).collect()
}

/// Span masking, then token dropping, then local shuffling of the content.
pub fn corrupt_content<R: Rng + ?Sized>(content: &[u32], cfg: &NoiseConfig, rng: &mut R) -> Vec<u32> {
    let (masked, _) = span_mask(content, cfg.ae_mask_rate, cfg.span_length_mean, rng);
    let kept = drop_tokens(&masked, cfg.token_drop_rate, rng);
    local_shuffle(&kept, cfg.shuffle_window, rng)
}

/// [`corrupt_content`] applied inside a leading `BOS` and trailing `EOS`, which stay put.
pub fn corrupt_sequence<R: Rng + ?Sized>(ids: &[u32], cfg: &NoiseConfig, rng: &mut R) -> Vec<u32> {
    let (head, content, tail) = split_frame(ids);
    let mut out = head.to_vec();
    out.extend(corrupt_content(content, cfg, rng));
    out.extend_from_slice(tail);
    out
}

/// Splits `[BOS] content [EOS]` into its three parts; either marker may be absent.
pub fn split_frame(ids: &[u32]) -> (&[u32], &[u32], &[u32]) {
    let start = usize::from(ids.first() == Some(&BOS));
    let end = if ids.len() > start && ids.last() == Some(&EOS) { ids.len() - 1 } else { ids.len() };
    (&ids[..start], &ids[start..end], &ids[end..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn span_mask_hits_the_exact_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let content: Vec<u32> = (100..150).collect();
        for rate in [0.0, 0.2, 0.5, 1.0] {
            let (out, pos) = span_mask(&content, rate, 3.0, &mut rng);
            assert_eq!(pos.len(), (rate * 50.0_f64).round() as usize);
            assert_eq!(out.iter().filter(|&&t| t == MASK).count(), pos.len());
        }
    }

    #[test]
    fn frame_split_handles_missing_markers() {
        assert_eq!(split_frame(&[1, 20, 2]), (&[1][..], &[20][..], &[2][..]));
        assert_eq!(split_frame(&[20, 21]), (&[][..], &[20, 21][..], &[][..]));
        assert_eq!(split_frame(&[1]), (&[1][..], &[][..], &[][..]));
    }

    #[test]
    fn mixed_policy_keeps_specials() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ids = [BOS, 40, 41, 42, EOS];
        let (out, pos) = mask_with(&ids, |_| 1.0, MaskPolicy::Mixed, 100, &mut rng);
        assert_eq!(pos, vec![1, 2, 3]);
        assert_eq!((out[0], out[4]), (BOS, EOS));
    }
}
