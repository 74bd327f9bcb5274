//! The seven training objectives and the sequence constructions they share.
//!
//! | objective | input | target |
//! |-----------|-------|--------|
//! | MLM | mask(x) | x at masked positions |
//! | AE | noise(x) | x |
//! | BT | model translation of x | x |
//! | TLM | mask(x ⊕ z) | x ⊕ z at masked positions |
//! | TAE | noise(x) ⊕ noise(z) | x ⊕ z |
//! | IRGen | x | z |
//! | Decomp | z | x |
//!
//! Here `x` is a source function and `z` its normalized IR. Example
//! construction ([`build_examples`]) is kept apart from loss evaluation
//! ([`example_loss`]) so the back-translated input can be held fixed.

pub mod noise;

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use noise::{corrupt_content, corrupt_sequence, mask_tokens, mask_with, MaskPolicy, NoiseConfig};

use crate::frontends::FunctionRecord;
use crate::lang::{LanguageTag, SourceLang};
use crate::neural::{DecodeOptions, LossReport, LossSpec, Model, ModelInput, NeuralError};
use crate::tokenizer::{TokenSequence, TokenizerError, Vocab, BOS, EOS, SEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "MLM")]
    Mlm,
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "BT")]
    Bt,
    #[serde(rename = "TLM")]
    Tlm,
    #[serde(rename = "TAE")]
    Tae,
    #[serde(rename = "IRGen")]
    IrGen,
    #[serde(rename = "Decomp")]
    Decomp,
}

impl Objective {
    pub const ALL: [Objective; 7] = [
        Objective::Mlm,
        Objective::Ae,
        Objective::Bt,
        Objective::Tlm,
        Objective::Tae,
        Objective::IrGen,
        Objective::Decomp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Mlm => "MLM",
            Objective::Ae => "AE",
            Objective::Bt => "BT",
            Objective::Tlm => "TLM",
            Objective::Tae => "TAE",
            Objective::IrGen => "IRGen",
            Objective::Decomp => "Decomp",
        }
    }

    /// Whether every record needs normalized IR.
    pub fn requires_ir(self) -> bool {
        matches!(self, Objective::Tlm | Objective::Tae | Objective::IrGen | Objective::Decomp)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown objective `{s}`"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("{objective} needs normalized IR but record {id} has none")]
    MissingIR { objective: Objective, id: String },
    #[error("back-translation from {0} needs a second language")]
    NoTranslationTarget(SourceLang),
    #[error("invalid noise configuration: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// A tokenized training record: `[BOS] … [EOS]` for the code and, when it
/// compiled, for its normalized IR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub lang: SourceLang,
    pub code: Vec<u32>,
    pub ir: Option<Vec<u32>>,
}

impl Sample {
    pub fn from_record(rec: &FunctionRecord, vocab: &Vocab) -> Result<Sample, TokenizerError> {
        let lang = rec.language.language();
        Ok(Sample {
            id: rec.id.clone(),
            lang,
            code: vocab.encode(&rec.source, LanguageTag::Source(lang))?.ids,
            ir: rec
                .normalized_ir
                .as_ref()
                .map(|ir| vocab.encode(ir, LanguageTag::Ir(lang)).map(|s| s.ids))
                .transpose()?,
        })
    }

    pub fn code_input(&self) -> ModelInput {
        ModelInput::uniform(self.code.clone(), LanguageTag::Source(self.lang))
    }

    pub fn ir_input(&self) -> Option<ModelInput> {
        self.ir.as_ref().map(|z| ModelInput::uniform(z.clone(), LanguageTag::Ir(self.lang)))
    }
}

/// `x ⊕ SEP ⊕ z` with one tag per position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcatPair {
    pub ids: Vec<u32>,
    pub tags: Vec<LanguageTag>,
    /// Index of the `SEP` token, where the tags switch to the second segment's.
    pub boundary: usize,
}

impl ConcatPair {
    pub fn input(&self) -> ModelInput {
        ModelInput {
            ids: self.ids.clone(),
            tags: self.tags.clone(),
        }
    }
}

/// Builds `[BOS] x [SEP] z [EOS]`; `x`'s own BOS/EOS and `z`'s are dropped.
///
/// `BOS` and `x` carry `x.language`; `SEP`, `z` and `EOS` carry `z.language`.
pub fn concat_with_ir(x: &TokenSequence, z: &TokenSequence, max_len: usize) -> Result<ConcatPair, NeuralError> {
    let (_, xc, _) = noise::split_frame(&x.ids);
    let (_, zc, _) = noise::split_frame(&z.ids);
    let len = xc.len() + zc.len() + 3;
    if len > max_len {
        return Err(NeuralError::SequenceTooLong { len, max: max_len });
    }
    let mut ids = Vec::with_capacity(len);
    ids.push(BOS);
    ids.extend_from_slice(xc);
    let boundary = ids.len();
    ids.push(SEP);
    ids.extend_from_slice(zc);
    ids.push(EOS);
    let mut tags = vec![x.language; boundary];
    tags.resize(len, z.language);
    Ok(ConcatPair { ids, tags, boundary })
}

/// Settings shared by every objective step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepContext {
    pub noise: NoiseConfig,
    /// Languages back-translation may translate into.
    pub languages: Vec<SourceLang>,
    /// Back-translate through IR dialects and languages instead of language pairs.
    pub pivot: bool,
    /// Cap on generated tokens during back-translation.
    pub bt_max_len: usize,
}

impl StepContext {
    pub fn new(languages: Vec<SourceLang>) -> Self {
        Self {
            noise: NoiseConfig::default(),
            languages,
            pivot: false,
            bt_max_len: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExampleKind {
    Masked { input: ModelInput, targets: Vec<(usize, u32)> },
    Sequence { src: ModelInput, tgt: ModelInput },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub objective: Objective,
    pub kind: ExampleKind,
}

impl TrainingExample {
    pub fn spec(&self) -> LossSpec<'_> {
        match &self.kind {
            ExampleKind::Masked { input, targets } => LossSpec::Masked { input, targets },
            ExampleKind::Sequence { src, tgt } => LossSpec::Sequence { src, tgt },
        }
    }

    fn masked(objective: Objective, original: &ModelInput, masked: Vec<u32>, positions: &[usize]) -> Self {
        let targets = positions.iter().map(|&p| (p, original.ids[p])).collect();
        let input = ModelInput {
            ids: masked,
            tags: original.tags.clone(),
        };
        Self {
            objective,
            kind: ExampleKind::Masked { input, targets },
        }
    }

    fn sequence(objective: Objective, src: ModelInput, tgt: ModelInput) -> Self {
        Self {
            objective,
            kind: ExampleKind::Sequence { src, tgt },
        }
    }
}

fn need_ir(objective: Objective, s: &Sample) -> Result<&[u32], ObjectiveError> {
    s.ir.as_deref().ok_or_else(|| ObjectiveError::MissingIR {
        objective,
        id: s.id.clone(),
    })
}

/// Masks `input`; with a positive rate at least one position is always masked.
fn mask_input<R: Rng + ?Sized>(
    input: &ModelInput,
    rate: impl Fn(usize) -> f64,
    cfg: &NoiseConfig,
    vocab_size: usize,
    rng: &mut R,
) -> (Vec<u32>, Vec<usize>) {
    let (mut masked, mut positions) = mask_with(&input.ids, &rate, cfg.mask_policy, vocab_size, rng);
    if positions.is_empty() {
        let eligible: Vec<usize> = (0..input.len())
            .filter(|&i| !crate::tokenizer::is_special(input.ids[i]) && rate(i) > 0.0)
            .collect();
        if let Some(&p) = eligible.choose(rng) {
            masked[p] = crate::tokenizer::MASK;
            positions.push(p);
        }
    }
    (masked, positions)
}

/// MLM inputs: per language, the batch's code content as one stream cut into
/// `max_len - 2` token chunks, each framed by BOS/EOS.
pub fn mlm_streams(batch: &[Sample], max_len: usize) -> Vec<ModelInput> {
    let chunk = max_len.saturating_sub(2).max(1);
    let mut out = Vec::new();
    for lang in SourceLang::ALL {
        let stream: Vec<u32> = batch
            .iter()
            .filter(|s| s.lang == lang)
            .flat_map(|s| noise::split_frame(&s.code).1.iter().copied())
            .collect();
        for piece in stream.chunks(chunk) {
            let mut ids = vec![BOS];
            ids.extend_from_slice(piece);
            ids.push(EOS);
            out.push(ModelInput::uniform(ids, LanguageTag::Source(lang)));
        }
    }
    out
}

/// Generation with gradients blocked: the output is plain token ids.
fn generate(model: &Model, src: &ModelInput, target: LanguageTag, ctx: &StepContext) -> Result<ModelInput, NeuralError> {
    let limit = ctx.bt_max_len.min(model.config.max_len.saturating_sub(2));
    let mut ids = model.greedy_decode(src, target, &DecodeOptions::text(limit))?;
    if ids.last() != Some(&EOS) {
        ids.push(EOS);
    }
    Ok(ModelInput::uniform(ids, target))
}

fn other_language<R: Rng + ?Sized>(lang: SourceLang, ctx: &StepContext, rng: &mut R) -> Result<SourceLang, ObjectiveError> {
    let others: Vec<SourceLang> = ctx.languages.iter().copied().filter(|&l| l != lang).collect();
    others.choose(rng).copied().ok_or(ObjectiveError::NoTranslationTarget(lang))
}

/// Builds the examples of one objective step.
///
/// The model is only read, and only by back-translation.
pub fn build_examples<R: Rng + ?Sized>(
    objective: Objective,
    batch: &[Sample],
    model: &Model,
    ctx: &StepContext,
    rng: &mut R,
) -> Result<Vec<TrainingExample>, ObjectiveError> {
    ctx.noise.validate().map_err(ObjectiveError::InvalidNoise)?;
    if objective.requires_ir() {
        for s in batch {
            need_ir(objective, s)?;
        }
    }
    let cfg = &ctx.noise;
    let vocab = model.config.vocab_size;
    let max_len = model.config.max_len;
    let mut out = Vec::new();
    match objective {
        Objective::Mlm => {
            for input in mlm_streams(batch, max_len) {
                let (masked, pos) = mask_input(&input, |_| cfg.mlm_mask_rate, cfg, vocab, rng);
                out.push(TrainingExample::masked(objective, &input, masked, &pos));
            }
        }
        Objective::Tlm => {
            for s in batch {
                let pair = code_ir_pair(s, need_ir(objective, s)?, max_len)?;
                let ir_rate = cfg.tlm_ir_mask_rate.unwrap_or(cfg.mlm_mask_rate);
                let rate = |i: usize| if i >= pair.boundary { ir_rate } else { cfg.mlm_mask_rate };
                let input = pair.input();
                let (masked, pos) = mask_input(&input, rate, cfg, vocab, rng);
                out.push(TrainingExample::masked(objective, &input, masked, &pos));
            }
        }
        Objective::Ae => {
            for s in batch {
                let tgt = s.code_input();
                let src = ModelInput::uniform(corrupt_sequence(&s.code, cfg, rng), tgt.tags[0]);
                out.push(TrainingExample::sequence(objective, src, tgt));
            }
        }
        Objective::Tae => {
            for s in batch {
                let z = need_ir(objective, s)?;
                let noisy_x = corrupt_sequence(&s.code, cfg, rng);
                let noisy_z = corrupt_sequence(z, cfg, rng);
                let src = code_ir_pair_ids(s.lang, &noisy_x, &noisy_z, max_len)?;
                let tgt = code_ir_pair(s, z, max_len)?;
                out.push(TrainingExample::sequence(objective, src.input(), tgt.input()));
            }
        }
        Objective::IrGen => {
            for s in batch {
                out.push(TrainingExample::sequence(objective, s.code_input(), s.ir_input().expect("checked above")));
            }
        }
        Objective::Decomp => {
            for s in batch {
                out.push(TrainingExample::sequence(objective, s.ir_input().expect("checked above"), s.code_input()));
            }
        }
        Objective::Bt => {
            for s in batch {
                let x = s.code_input();
                if ctx.pivot {
                    // Code → IR of another language → code.
                    let via = other_language(s.lang, ctx, rng)?;
                    let y = generate(model, &x, LanguageTag::Ir(via), ctx)?;
                    out.push(TrainingExample::sequence(objective, y, x));
                    // IR → code in another language → IR.
                    if let Some(z) = s.ir_input() {
                        let via = other_language(s.lang, ctx, rng)?;
                        let y = generate(model, &z, LanguageTag::Source(via), ctx)?;
                        out.push(TrainingExample::sequence(objective, y, z));
                    }
                } else {
                    let via = other_language(s.lang, ctx, rng)?;
                    let y = generate(model, &x, LanguageTag::Source(via), ctx)?;
                    out.push(TrainingExample::sequence(objective, y, x));
                }
            }
        }
    }
    Ok(out)
}

fn code_ir_pair(s: &Sample, z: &[u32], max_len: usize) -> Result<ConcatPair, NeuralError> {
    code_ir_pair_ids(s.lang, &s.code, z, max_len)
}

fn code_ir_pair_ids(lang: SourceLang, x: &[u32], z: &[u32], max_len: usize) -> Result<ConcatPair, NeuralError> {
    concat_with_ir(
        &TokenSequence::new(x.to_vec(), LanguageTag::Source(lang)),
        &TokenSequence::new(z.to_vec(), LanguageTag::Ir(lang)),
        max_len,
    )
}

/// Summed loss over `examples`, accumulating gradients into `grads` when given.
pub fn example_loss(
    model: &Model,
    objective: Objective,
    examples: &[TrainingExample],
    mut grads: Option<&mut [f64]>,
) -> Result<LossReport, ObjectiveError> {
    let mut report = LossReport::new(objective.name(), 0.0, 0);
    for ex in examples {
        let r = match grads.as_deref_mut() {
            Some(g) => model.accumulate_grad(ex.spec(), 1.0, g)?,
            None => model.loss(ex.spec())?,
        };
        report.merge(&r);
    }
    if !report.loss.is_finite() {
        return Err(NeuralError::NonFiniteLoss(report.loss).into());
    }
    Ok(report)
}

/// One objective step: builds the examples and evaluates their summed loss.
pub fn objective_step<R: Rng + ?Sized>(
    objective: Objective,
    batch: &[Sample],
    model: &Model,
    ctx: &StepContext,
    rng: &mut R,
    grads: Option<&mut [f64]>,
) -> Result<LossReport, ObjectiveError> {
    let examples = build_examples(objective, batch, model, ctx, rng)?;
    example_loss(model, objective, &examples, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_names_roundtrip() {
        for o in Objective::ALL {
            assert_eq!(o.name().parse::<Objective>().unwrap(), o);
            let json = serde_json::to_string(&o).unwrap();
            assert_eq!(json, format!("\"{}\"", o.name()));
        }
        assert!("irgen".parse::<Objective>().is_ok());
        assert!("DOBF".parse::<Objective>().is_err());
    }

    #[test]
    fn streams_chunk_by_language() {
        let mk = |lang, n: u32| Sample {
            id: String::new(),
            lang,
            code: [vec![BOS], (20..20 + n).collect(), vec![EOS]].concat(),
            ir: None,
        };
        let batch = [mk(SourceLang::Rust, 3), mk(SourceLang::Cpp, 4), mk(SourceLang::Rust, 2)];
        let streams = mlm_streams(&batch, 6);
        let shapes: Vec<(usize, LanguageTag)> = streams.iter().map(|s| (s.len(), s.tags[0])).collect();
        use LanguageTag::Source;
        assert_eq!(
            shapes,
            vec![(6, Source(SourceLang::Cpp)), (6, Source(SourceLang::Rust)), (3, Source(SourceLang::Rust))]
        );
        assert_eq!(streams[1].ids, vec![BOS, 20, 21, 22, 20, EOS]);
    }
}
