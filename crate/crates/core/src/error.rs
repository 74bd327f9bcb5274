//! One error type over every module, with a stable identifier per failure.

use crate::evalharness::EvalError;
use crate::frontends::FrontendError;
use crate::irnorm::IrError;
use crate::neural::NeuralError;
use crate::objectives::ObjectiveError;
use crate::tokenizer::TokenizerError;
use crate::trainer::{LoadError, TrainError};
use crate::translator::TranslateError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    /// Name printed as `error[<id>]`. Wrapped errors report the innermost cause.
    pub fn id(&self) -> &'static str {
        match self {
            Error::Ir(e) => e.id(),
            Error::Frontend(e) => e.id(),
            Error::Tokenizer(e) => e.id(),
            Error::Neural(e) => e.id(),
            Error::Objective(e) => e.id(),
            Error::Load(e) => e.id(),
            Error::Train(e) => e.id(),
            Error::Translate(e) => e.id(),
            Error::Eval(e) => e.id(),
            Error::Io { .. } => "IOError",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}

impl IrError {
    pub fn id(&self) -> &'static str {
        match self {
            IrError::MalformedIR { .. } => "MalformedIR",
            IrError::DanglingLabel { .. } => "DanglingLabel",
            IrError::DemanglerFailure { .. } => "DemanglerFailure",
        }
    }
}

impl FrontendError {
    pub fn id(&self) -> &'static str {
        match self {
            FrontendError::MissingFrontend(_) => "MissingFrontend",
            FrontendError::InvalidConfig(_) => "InvalidFrontendConfig",
            FrontendError::Io { .. } => "IOError",
            FrontendError::BadShard { .. } => "BadShard",
        }
    }
}

impl TokenizerError {
    pub fn id(&self) -> &'static str {
        match self {
            TokenizerError::EmptyCorpus => "EmptyCorpus",
            TokenizerError::UnknownByte(_) => "UnknownByte",
            TokenizerError::SizeTooSmall { .. } => "VocabSizeTooSmall",
            TokenizerError::InvalidFile(_) => "InvalidVocabFile",
        }
    }
}

impl NeuralError {
    pub fn id(&self) -> &'static str {
        match self {
            NeuralError::SequenceTooLong { .. } => "SequenceTooLong",
            NeuralError::NonFiniteLoss(_) => "NonFiniteLoss",
            NeuralError::EmptyMaskSet => "EmptyMaskSet",
            NeuralError::EmptyTarget => "EmptyTarget",
            NeuralError::InvalidTag(_) => "InvalidTag",
            NeuralError::InvalidInput(_) => "InvalidModelInput",
            NeuralError::InvalidConfig(_) => "InvalidModelConfig",
            NeuralError::CheckpointMismatch { .. } => "CheckpointMismatch",
            NeuralError::Checkpoint(_) => "InvalidCheckpoint",
        }
    }
}

impl ObjectiveError {
    pub fn id(&self) -> &'static str {
        match self {
            ObjectiveError::MissingIR { .. } => "MissingIR",
            ObjectiveError::NoTranslationTarget(_) => "NoTranslationTarget",
            ObjectiveError::InvalidNoise(_) => "InvalidNoiseConfig",
            ObjectiveError::Neural(e) => e.id(),
        }
    }
}

impl LoadError {
    pub fn id(&self) -> &'static str {
        match self {
            LoadError::Shard(e) => e.id(),
            LoadError::Tokenizer(e) => e.id(),
        }
    }
}

impl TrainError {
    pub fn id(&self) -> &'static str {
        match self {
            TrainError::InvalidConfig(_) => "InvalidTrainConfig",
            TrainError::MissingIR(_) => "MissingIR",
            TrainError::NonFiniteLoss { .. } => "NonFiniteLoss",
            TrainError::Objective(e) => e.id(),
            TrainError::Neural(e) => e.id(),
            TrainError::Io { .. } => "IOError",
        }
    }
}

impl TranslateError {
    pub fn id(&self) -> &'static str {
        match self {
            TranslateError::SameLanguage(_) => "SameLanguage",
            TranslateError::CompileFailure(_) => "CompileFailure",
            TranslateError::MalformedIR(e) => e.id(),
            TranslateError::DecoderModeMismatch { .. } => "DecoderModeMismatch",
            TranslateError::Neural(e) => e.id(),
            TranslateError::Tokenizer(e) => e.id(),
        }
    }
}

impl EvalError {
    pub fn id(&self) -> &'static str {
        match self {
            EvalError::ToolchainMissing(_) => "ToolchainMissing",
            EvalError::EmptyInput => "EmptyInput",
            EvalError::UnknownToken(_) => "UnknownToken",
            EvalError::InvalidSet(_) => "InvalidEvalSet",
            EvalError::ReferenceFails { .. } => "ReferenceFails",
            EvalError::Io { .. } => "IOError",
        }
    }
}
