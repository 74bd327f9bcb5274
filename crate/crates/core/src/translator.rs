//! Inference: direct translation, decompilation and the IR pivot.

use crate::irnorm::{normalize, IrError, NormalizationConfig};
use crate::lang::{LanguageTag, SourceLang};
use crate::neural::{Checkpoint, DecodeOptions, DecoderMode, Model, ModelInput, NeuralError};
use crate::tokenizer::{TokenizerError, Vocab};

#[derive(Debug, thiserror::Error)]
pub enum TranslateError {
    #[error("source and target language are both {0}")]
    SameLanguage(SourceLang),
    #[error("frontend could not compile the input: {0}")]
    CompileFailure(String),
    #[error(transparent)]
    MalformedIR(#[from] IrError),
    #[error("checkpoint uses {found:?} decoders, {requested:?} were requested")]
    DecoderModeMismatch { requested: DecoderMode, found: DecoderMode },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// A loaded checkpoint plus its vocabulary.
#[derive(Debug, Clone)]
pub struct Translator {
    pub model: Model,
    pub vocab: Vocab,
}

impl Translator {
    /// Fails with `CheckpointMismatch` when `vocab` is not the training vocabulary.
    pub fn new(ck: &Checkpoint, vocab: Vocab) -> Result<Self, TranslateError> {
        ck.expect_vocab(&vocab.hash())?;
        Ok(Self { model: ck.model()?, vocab })
    }

    pub fn from_model(model: Model, vocab: Vocab) -> Self {
        Self { model, vocab }
    }

    fn options(&self) -> DecodeOptions {
        DecodeOptions::text(self.model.config.max_len)
    }

    /// Up to `k` decodings of `input` into `target`, best first. Beam 1 is greedy.
    pub fn candidates(&self, input: &ModelInput, target: LanguageTag, beam: usize, k: usize) -> Result<Vec<String>, TranslateError> {
        let opts = self.options();
        let outputs = if beam <= 1 {
            vec![self.model.greedy_decode(input, target, &opts)?]
        } else {
            self.model
                .beam_search(input, target, beam, &opts)?
                .into_iter()
                .take(k.max(1))
                .map(|h| h.ids)
                .collect()
        };
        Ok(outputs.iter().map(|ids| self.vocab.decode(ids)).collect())
    }

    fn first(&self, input: &ModelInput, target: LanguageTag, beam: usize) -> Result<String, TranslateError> {
        Ok(self.candidates(input, target, beam, 1)?.remove(0))
    }

    /// Source to source without any IR.
    pub fn translate(&self, source: &str, src: SourceLang, tgt: SourceLang, beam: usize) -> Result<String, TranslateError> {
        self.translate_k(source, src, tgt, beam, 1).map(|mut v| v.remove(0))
    }

    /// The `k` best translations from one beam.
    pub fn translate_k(&self, source: &str, src: SourceLang, tgt: SourceLang, beam: usize, k: usize) -> Result<Vec<String>, TranslateError> {
        if src == tgt {
            return Err(TranslateError::SameLanguage(src));
        }
        let input = ModelInput::from(&self.vocab.encode(source, LanguageTag::Source(src))?);
        self.candidates(&input, LanguageTag::Source(tgt), beam, k)
    }

    /// Normalizes `ir`, tags it as the dialect of `ir_lang` and decodes into `tgt`.
    pub fn decompile(
        &self,
        ir: &str,
        ir_lang: SourceLang,
        tgt: SourceLang,
        mode: Option<DecoderMode>,
        norm: &NormalizationConfig,
    ) -> Result<String, TranslateError> {
        if let Some(requested) = mode {
            let found = self.model.config.decoder_mode;
            if requested != found {
                return Err(TranslateError::DecoderModeMismatch { requested, found });
            }
        }
        if ir_lang != tgt {
            log::info!("decoding {} IR into {tgt}", LanguageTag::Ir(ir_lang));
        }
        let normalized = normalize(ir, norm)?;
        self.pivot_from_ir(&normalized, ir_lang, tgt, 1)
    }

    /// Decodes already-normalized IR of `src` into `tgt`.
    pub fn pivot_from_ir(&self, normalized_ir: &str, src: SourceLang, tgt: SourceLang, beam: usize) -> Result<String, TranslateError> {
        let input = ModelInput::from(&self.vocab.encode(normalized_ir, LanguageTag::Ir(src))?);
        self.first(&input, LanguageTag::Source(tgt), beam)
    }

    /// Compiles `source`, normalizes its IR and decodes that into `tgt`.
    ///
    /// There is no fallback to direct translation when compilation fails.
    #[cfg(feature = "native")]
    pub fn pivot_translate(
        &self,
        source: &str,
        src: SourceLang,
        tgt: SourceLang,
        frontends: &crate::frontends::FrontendConfig,
        norm: &NormalizationConfig,
        beam: usize,
    ) -> Result<String, TranslateError> {
        use crate::frontends::{compile_to_ir, CompileStatus, FunctionRecord, Provenance};
        let rec = FunctionRecord::new(
            LanguageTag::Source(src),
            source.to_string(),
            Provenance {
                path: "<input>".into(),
                start: 0,
                end: source.len(),
            },
        );
        let compiled = compile_to_ir(&rec, frontends).map_err(|e| TranslateError::CompileFailure(e.to_string()))?;
        let raw = match (compiled.compile_status, compiled.raw_ir) {
            (CompileStatus::Ok, Some(raw)) => raw,
            (CompileStatus::CompileError(msg), _) => return Err(TranslateError::CompileFailure(msg)),
            (status, _) => return Err(TranslateError::CompileFailure(status.name().to_string())),
        };
        let normalized = normalize(&raw, norm)?;
        self.pivot_from_ir(&normalized, src, tgt, beam)
    }
}
