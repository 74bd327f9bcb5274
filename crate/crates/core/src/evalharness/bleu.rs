//! BLEU-4 with brevity penalty over token ids.

use std::collections::HashMap;

use super::EvalError;

const MAX_ORDER: usize = 4;

/// Clipped n-gram matches and candidate n-gram totals for orders 1..=4.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn of(candidate: &[u32], reference: &[u32]) -> Self {
        let mut s = BleuStats {
            cand_len: candidate.len(),
            ref_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let rc = ngram_counts(reference, n);
            for (g, c) in ngram_counts(candidate, n) {
                s.matches[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
                s.totals[n - 1] += c;
            }
        }
        s
    }

    pub fn add(&mut self, o: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.cand_len += o.cand_len;
        self.ref_len += o.ref_len;
    }

    /// Score in [0, 100]. Orders with no candidate n-grams are left out of
    /// the geometric mean; any order with zero matches gives 0.
    pub fn score(&self) -> f64 {
        if self.cand_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 0..MAX_ORDER {
            if self.totals[n] == 0 {
                continue;
            }
            if self.matches[n] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[n] as f64 / self.totals[n] as f64).ln();
            orders += 1;
        }
        let bp = if self.cand_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        };
        100.0 * bp * (log_sum / orders as f64).exp()
    }
}

fn ngram_counts(ids: &[u32], n: usize) -> HashMap<&[u32], usize> {
    let mut m = HashMap::new();
    if ids.len() >= n {
        for w in ids.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU of one candidate against one reference.
pub fn compute_bleu(candidate: &[u32], reference: &[u32]) -> Result<f64, EvalError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(BleuStats::of(candidate, reference).score())
}

/// Corpus BLEU: n-gram statistics summed over all pairs before scoring.
pub fn corpus_bleu<'a>(pairs: impl IntoIterator<Item = (&'a [u32], &'a [u32])>) -> f64 {
    let mut total = BleuStats::default();
    for (c, r) in pairs {
        total.add(&BleuStats::of(c, r));
    }
    total.score()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_100_and_disjoint_is_0() {
        let a = [5, 6, 7, 8, 9];
        assert!((compute_bleu(&a, &a).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(compute_bleu(&a, &[1, 2, 3]).unwrap(), 0.0);
        assert!(matches!(compute_bleu(&[], &a), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn short_candidates_pay_the_brevity_penalty() {
        let r = [1, 2, 3, 4, 5, 6, 7, 8];
        let c = [1, 2, 3, 4];
        let expected = 100.0 * (1.0f64 - 2.0).exp();
        assert!((compute_bleu(&c, &r).unwrap() - expected).abs() < 1e-9);
    }
}
