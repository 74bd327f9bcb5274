//! Language tags: the source languages and one IR dialect per source language.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A programming language the toolkit translates between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLang {
    Cpp,
    Go,
    Java,
    Rust,
}

impl SourceLang {
    pub const ALL: [SourceLang; 4] = [SourceLang::Cpp, SourceLang::Go, SourceLang::Java, SourceLang::Rust];

    pub fn index(self) -> usize {
        match self {
            SourceLang::Cpp => 0,
            SourceLang::Go => 1,
            SourceLang::Java => 2,
            SourceLang::Rust => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceLang::Cpp => "cpp",
            SourceLang::Go => "go",
            SourceLang::Java => "java",
            SourceLang::Rust => "rust",
        }
    }

    /// File extension used when writing a function to disk for compilation.
    pub fn extension(self) -> &'static str {
        match self {
            SourceLang::Cpp => "cpp",
            SourceLang::Go => "go",
            SourceLang::Java => "java",
            SourceLang::Rust => "rs",
        }
    }
}

/// Either a source language or the IR dialect emitted by that language's frontend.
///
/// The set is closed: `Ir(l)` exists exactly when `Source(l)` does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LanguageTag {
    Source(SourceLang),
    Ir(SourceLang),
}

impl LanguageTag {
    /// Number of distinct tags (and rows of the language-embedding table).
    pub const COUNT: usize = 2 * SourceLang::ALL.len();

    pub fn all() -> impl Iterator<Item = LanguageTag> {
        SourceLang::ALL
            .into_iter()
            .map(LanguageTag::Source)
            .chain(SourceLang::ALL.into_iter().map(LanguageTag::Ir))
    }

    /// Dense index: source tags first, then dialects in the same order.
    pub fn index(self) -> usize {
        match self {
            LanguageTag::Source(l) => l.index(),
            LanguageTag::Ir(l) => SourceLang::ALL.len() + l.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<LanguageTag> {
        let n = SourceLang::ALL.len();
        if i < n {
            Some(LanguageTag::Source(SourceLang::ALL[i]))
        } else if i < 2 * n {
            Some(LanguageTag::Ir(SourceLang::ALL[i - n]))
        } else {
            None
        }
    }

    /// The source language this tag belongs to (its own, or the one that produced the dialect).
    pub fn language(self) -> SourceLang {
        match self {
            LanguageTag::Source(l) | LanguageTag::Ir(l) => l,
        }
    }

    pub fn is_source(self) -> bool {
        matches!(self, LanguageTag::Source(_))
    }

    pub fn dialect(self) -> LanguageTag {
        LanguageTag::Ir(self.language())
    }
}

impl From<SourceLang> for LanguageTag {
    fn from(l: SourceLang) -> Self {
        LanguageTag::Source(l)
    }
}

impl fmt::Display for SourceLang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanguageTag::Source(l) => write!(f, "{l}"),
            LanguageTag::Ir(l) => write!(f, "ir-{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown language tag `{0}`")]
pub struct UnknownTag(pub String);

impl FromStr for SourceLang {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cpp" | "c++" => Ok(SourceLang::Cpp),
            "go" => Ok(SourceLang::Go),
            "java" => Ok(SourceLang::Java),
            "rust" | "rs" => Ok(SourceLang::Rust),
            _ => Err(UnknownTag(s.to_string())),
        }
    }
}

impl FromStr for LanguageTag {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.strip_prefix("ir-") {
            Some(rest) => rest
                .parse()
                .map(LanguageTag::Ir)
                .map_err(|_| UnknownTag(s.to_string())),
            None => lower
                .parse()
                .map(LanguageTag::Source)
                .map_err(|_| UnknownTag(s.to_string())),
        }
    }
}

impl Serialize for LanguageTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguageTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
