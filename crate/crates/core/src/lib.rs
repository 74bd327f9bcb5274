//! Code translation with LLVM IR augmentation.
//!
//! The pipeline: [`frontends`] turn source functions into size-optimized IR,
//! [`irnorm`] normalizes that IR, [`tokenizer`] maps both to token ids,
//! [`objectives`] and [`trainer`] fit the [`neural`] encoder-decoder, and
//! [`translator`] and [`evalharness`] run and grade translations.

pub mod error;
pub mod evalharness;
pub mod frontends;
pub mod irnorm;
pub mod lang;
pub mod neural;
pub mod objectives;
pub mod pool;
#[cfg(feature = "native")]
pub mod process;
pub mod tokenizer;
#[cfg(feature = "native")]
pub mod cli;
pub mod trainer;
pub mod translator;

pub use error::Error;
