use std::cmp::Ordering;

use super::layers::attention_core;
use super::matrix::{add_into, argmax, log_sum_exp};
use super::{Model, ModelInput, NeuralError};
use crate::lang::LanguageTag;
use crate::tokenizer::{BOS, EOS, RESERVED};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOptions {
    pub bos: u32,
    /// Generation stops after this token; `None` always runs to `max_len`.
    pub eos: Option<u32>,
    /// Maximum number of generated tokens (BOS not counted).
    pub max_len: usize,
    /// Tokens that are never generated.
    pub banned: Vec<u32>,
}

impl DecodeOptions {
    /// BOS/EOS framing with every other special token banned.
    pub fn text(max_len: usize) -> Self {
        Self {
            bos: BOS,
            eos: Some(EOS),
            max_len,
            banned: (0..RESERVED).filter(|&t| t != EOS).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated ids including the leading BOS (and EOS if it was produced).
    pub ids: Vec<u32>,
    /// Summed log-probability of the generated tokens.
    pub logprob: f64,
    /// `logprob` divided by the number of generated tokens.
    pub score: f64,
}

/// Incremental decoder with cached self-attention keys/values.
#[derive(Debug, Clone)]
pub struct DecoderState {
    dec: usize,
    tag: LanguageTag,
    cross: Vec<(Vec<f64>, Vec<f64>)>,
    self_k: Vec<Vec<f64>>,
    self_v: Vec<Vec<f64>>,
    pos: usize,
}

impl DecoderState {
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Feeds one token and returns the logits for the next one.
    pub fn step(&mut self, m: &Model, token: u32) -> Vec<f64> {
        let d = m.config.dim;
        let p = &m.params;
        let stack = &m.layout().decoders[self.dec];
        let mut x = vec![0.0; d];
        m.embed_row(token, self.pos, self.tag, &mut x);
        for (i, l) in stack.layers.iter().enumerate() {
            let (a, _) = l.ln1.forward(p, &x);
            let q = l.self_attn.q.forward(p, &a, 1);
            self.self_k[i].extend(l.self_attn.k.forward(p, &a, 1));
            self.self_v[i].extend(l.self_attn.v.forward(p, &a, 1));
            let (o, _) = attention_core(&q, &self.self_k[i], &self.self_v[i], d, l.self_attn.heads, false);
            add_into(&mut x, &l.self_attn.o.forward(p, &o, 1));
            let (b, _) = l.ln2.forward(p, &x);
            let q = l.cross.q.forward(p, &b, 1);
            let (mk, mv) = &self.cross[i];
            let (o, _) = attention_core(&q, mk, mv, d, l.cross.heads, false);
            add_into(&mut x, &l.cross.o.forward(p, &o, 1));
            let (e, _) = l.ln3.forward(p, &x);
            let (f, _) = l.ffn.forward(p, &e, 1);
            add_into(&mut x, &f);
        }
        let (h, _) = stack.ln.forward(p, &x);
        self.pos += 1;
        m.project(&h)
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|x| x - lse).collect()
}

fn mask_banned(row: &mut [f64], banned: &[u32]) {
    for &b in banned {
        if let Some(x) = row.get_mut(b as usize) {
            *x = f64::NEG_INFINITY;
        }
    }
}

impl Model {
    /// Encodes `src` and prepares a decoder that writes in `target`.
    pub fn start_decoder(&self, src: &ModelInput, target: LanguageTag) -> Result<DecoderState, NeuralError> {
        let memory = self.encode_states(src)?;
        if target.index() >= self.config.lang_count {
            return Err(NeuralError::InvalidTag(target));
        }
        let n = src.ids.len();
        let dec = self.decoder_index(target);
        let stack = &self.layout().decoders[dec];
        let cross = stack
            .layers
            .iter()
            .map(|l| (l.cross.k.forward(&self.params, &memory, n), l.cross.v.forward(&self.params, &memory, n)))
            .collect();
        let depth = stack.layers.len();
        Ok(DecoderState {
            dec,
            tag: target,
            cross,
            self_k: vec![Vec::new(); depth],
            self_v: vec![Vec::new(); depth],
            pos: 0,
        })
    }

    fn generation_limit(&self, opts: &DecodeOptions) -> usize {
        opts.max_len.min(self.config.max_len.saturating_sub(1))
    }

    /// Argmax decoding; ties go to the lowest token id.
    pub fn greedy_decode(&self, src: &ModelInput, target: LanguageTag, opts: &DecodeOptions) -> Result<Vec<u32>, NeuralError> {
        let mut state = self.start_decoder(src, target)?;
        let mut ids = vec![opts.bos];
        let mut logits = state.step(self, opts.bos);
        for _ in 0..self.generation_limit(opts) {
            let mut lp = log_softmax(&logits);
            mask_banned(&mut lp, &opts.banned);
            let next = argmax(&lp) as u32;
            ids.push(next);
            if Some(next) == opts.eos {
                break;
            }
            logits = state.step(self, next);
        }
        Ok(ids)
    }

    /// Beam search ranked by summed log-probability during expansion.
    ///
    /// Returns every final hypothesis (finished ones plus those still open at the
    /// length limit), best first by length-normalized score; ties go to the
    /// lexicographically smallest id sequence.
    pub fn beam_search(&self, src: &ModelInput, target: LanguageTag, beam: usize, opts: &DecodeOptions) -> Result<Vec<Hypothesis>, NeuralError> {
        let beam = beam.max(1);
        let mut state = self.start_decoder(src, target)?;
        let logits = state.step(self, opts.bos);
        struct Open {
            ids: Vec<u32>,
            logprob: f64,
            state: DecoderState,
            next: Vec<f64>,
        }
        let mut open = vec![Open {
            ids: vec![opts.bos],
            logprob: 0.0,
            state,
            next: log_softmax(&logits),
        }];
        let mut done: Vec<Hypothesis> = Vec::new();
        for _ in 0..self.generation_limit(opts) {
            let mut cands: Vec<(f64, usize, u32)> = Vec::new();
            for (a, h) in open.iter().enumerate() {
                let mut lp = h.next.clone();
                mask_banned(&mut lp, &opts.banned);
                for (t, &x) in lp.iter().enumerate() {
                    if x > f64::NEG_INFINITY {
                        cands.push((h.logprob + x, a, t as u32));
                    }
                }
            }
            cands.sort_by(|x, y| {
                y.0.partial_cmp(&x.0)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| open[x.1].ids.cmp(&open[y.1].ids))
                    .then(x.2.cmp(&y.2))
            });
            cands.truncate(beam);
            let mut next_open = Vec::with_capacity(beam);
            for (logprob, a, t) in cands {
                let mut ids = open[a].ids.clone();
                ids.push(t);
                if Some(t) == opts.eos {
                    done.push(finish(ids, logprob));
                } else {
                    let mut state = open[a].state.clone();
                    let next = log_softmax(&state.step(self, t));
                    next_open.push(Open { ids, logprob, state, next });
                }
            }
            open = next_open;
            if open.is_empty() {
                break;
            }
        }
        done.extend(open.into_iter().map(|h| finish(h.ids, h.logprob)));
        done.sort_by(|x, y| {
            y.score
                .partial_cmp(&x.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| x.ids.cmp(&y.ids))
        });
        Ok(done)
    }

    /// The top hypothesis of [`Model::beam_search`].
    pub fn beam_decode(&self, src: &ModelInput, target: LanguageTag, beam: usize, opts: &DecodeOptions) -> Result<Vec<u32>, NeuralError> {
        let hyps = self.beam_search(src, target, beam, opts)?;
        Ok(hyps.into_iter().next().map(|h| h.ids).unwrap_or_else(|| vec![opts.bos]))
    }
}

fn finish(ids: Vec<u32>, logprob: f64) -> Hypothesis {
    let generated = (ids.len() - 1).max(1) as f64;
    Hypothesis {
        score: logprob / generated,
        ids,
        logprob,
    }
}
