//! Byte-level pair-merge subword vocabulary shared by all languages and IR dialects.
//!
//! Text is first split into chunks (identifier-like runs, whitespace runs, single
//! punctuation bytes); merges never cross chunk boundaries. Ids below
//! [`RESERVED`] are special tokens, then come the byte tokens, then merges in the
//! order they were learned.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::lang::LanguageTag;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const MASK: u32 = 3;
pub const SEP: u32 = 4;
/// Ids `0..RESERVED` are never produced by encoding text.
pub const RESERVED: u32 = 16;

pub const DEFAULT_VOCAB_SIZE: usize = 2048;

const MAGIC: &str = "codeir-vocab 1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizerError {
    #[error("cannot train a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("byte 0x{0:02x} is not in the vocabulary and byte fallback is disabled")]
    UnknownByte(u8),
    #[error("target size {target} leaves no room beyond {minimum} reserved and byte tokens")]
    SizeTooSmall { target: usize, minimum: usize },
    #[error("invalid vocabulary file: {0}")]
    InvalidFile(String),
}

/// A sequence of token ids with the language it is written in.
///
/// Encoded sequences start with BOS and end with EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub language: LanguageTag,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>, language: LanguageTag) -> Self {
        Self { ids, language }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The ids between the leading BOS and trailing EOS, if present.
    pub fn content(&self) -> &[u32] {
        let mut s = &self.ids[..];
        if s.first() == Some(&BOS) {
            s = &s[1..];
        }
        if s.last() == Some(&EOS) {
            s = &s[..s.len() - 1];
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    byte_fallback: bool,
    /// Bytes of every token id; empty for reserved ids.
    tokens: Vec<Vec<u8>>,
    byte_ids: [Option<u32>; 256],
    merges: Vec<(u32, u32)>,
    merge_rank: HashMap<(u32, u32), u32>,
}

pub fn is_special(id: u32) -> bool {
    id < RESERVED
}

/// Splits text into merge-isolated chunks.
pub fn pretokenize(text: &[u8]) -> Vec<&[u8]> {
    #[derive(PartialEq)]
    enum Class {
        Word,
        Space,
        Punct,
    }
    let class = |b: u8| {
        if b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80 {
            Class::Word
        } else if b.is_ascii_whitespace() {
            Class::Space
        } else {
            Class::Punct
        }
    };
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=text.len() {
        let split = i == text.len() || {
            let (a, b) = (class(text[i - 1]), class(text[i]));
            a != b || a == Class::Punct
        };
        if split {
            out.push(&text[start..i]);
            start = i;
        }
    }
    out
}

impl Vocab {
    /// Learns merges over `texts` until `target_size` ids exist or no pair repeats.
    ///
    /// The most frequent adjacent pair is merged first; ties go to the smallest
    /// `(left, right)` id pair, so the result depends only on the multiset of chunks.
    pub fn train<S: AsRef<str>>(texts: &[S], target_size: usize, byte_fallback: bool) -> Result<Vocab, TokenizerError> {
        let mut chunk_counts: BTreeMap<&[u8], u64> = BTreeMap::new();
        let mut seen = [false; 256];
        for t in texts {
            for chunk in pretokenize(t.as_ref().as_bytes()) {
                *chunk_counts.entry(chunk).or_default() += 1;
                for &b in chunk {
                    seen[b as usize] = true;
                }
            }
        }
        if chunk_counts.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut vocab = Vocab::with_bytes(byte_fallback, &seen);
        let minimum = vocab.tokens.len();
        if target_size <= minimum {
            return Err(TokenizerError::SizeTooSmall { target: target_size, minimum });
        }

        let mut words: Vec<(Vec<u32>, u64)> = chunk_counts
            .into_iter()
            .map(|(c, n)| (c.iter().map(|&b| vocab.byte_ids[b as usize].unwrap()).collect(), n))
            .collect();
        while vocab.tokens.len() < target_size {
            let Some((pair, count)) = most_frequent_pair(&words) else { break };
            if count < 2 {
                break;
            }
            let new_id = vocab.push_merge(pair);
            for (w, _) in &mut words {
                apply_merge(w, pair, new_id);
            }
        }
        Ok(vocab)
    }

    fn with_bytes(byte_fallback: bool, seen: &[bool; 256]) -> Vocab {
        let mut tokens = vec![Vec::new(); RESERVED as usize];
        let mut byte_ids = [None; 256];
        for b in 0..256usize {
            if byte_fallback || seen[b] {
                byte_ids[b] = Some(tokens.len() as u32);
                tokens.push(vec![b as u8]);
            }
        }
        Vocab {
            byte_fallback,
            tokens,
            byte_ids,
            merges: Vec::new(),
            merge_rank: HashMap::new(),
        }
    }

    fn push_merge(&mut self, pair: (u32, u32)) -> u32 {
        let id = self.tokens.len() as u32;
        let mut bytes = self.tokens[pair.0 as usize].clone();
        bytes.extend_from_slice(&self.tokens[pair.1 as usize]);
        self.tokens.push(bytes);
        self.merge_rank.insert(pair, self.merges.len() as u32);
        self.merges.push(pair);
        id
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_fallback
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Bytes a token id stands for (empty for special ids).
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(|t| t.as_slice())
    }

    /// The lowest non-special id whose bytes equal `bytes`.
    pub fn token_id(&self, bytes: &[u8]) -> Option<u32> {
        self.tokens
            .iter()
            .enumerate()
            .skip(RESERVED as usize)
            .find(|(_, t)| t.as_slice() == bytes)
            .map(|(i, _)| i as u32)
    }

    /// Human-readable form of a token, for reports.
    pub fn token_text(&self, id: u32) -> String {
        match id {
            PAD => "<pad>".into(),
            BOS => "<s>".into(),
            EOS => "</s>".into(),
            MASK => "<mask>".into(),
            SEP => "<sep>".into(),
            i if i < RESERVED => format!("<reserved{i}>"),
            i => String::from_utf8_lossy(self.token_bytes(i).unwrap_or_default()).into_owned(),
        }
    }

    /// Encodes text as `[BOS, ..., EOS]`.
    pub fn encode(&self, text: &str, language: LanguageTag) -> Result<TokenSequence, TokenizerError> {
        let mut ids = vec![BOS];
        ids.extend(self.encode_raw(text)?);
        ids.push(EOS);
        Ok(TokenSequence { ids, language })
    }

    /// Token ids of `text` without BOS/EOS.
    pub fn encode_raw(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        let mut out = Vec::new();
        for chunk in pretokenize(text.as_bytes()) {
            let mut word = Vec::with_capacity(chunk.len());
            for &b in chunk {
                word.push(self.byte_ids[b as usize].ok_or(TokenizerError::UnknownByte(b))?);
            }
            self.merge_word(&mut word);
            out.extend_from_slice(&word);
        }
        Ok(out)
    }

    fn merge_word(&self, word: &mut Vec<u32>) {
        while word.len() > 1 {
            let best = word
                .windows(2)
                .enumerate()
                .filter_map(|(i, p)| self.merge_rank.get(&(p[0], p[1])).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let pair = self.merges[rank as usize];
            let id = (self.tokens.len() - self.merges.len()) as u32 + rank;
            apply_merge(word, pair, id);
        }
    }

    /// Concatenates token bytes; BOS/EOS/PAD are dropped and MASK/SEP are rendered as
    /// `<mask>`/`<sep>`.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut bytes = Vec::new();
        for &id in ids {
            match id {
                PAD | BOS | EOS => {}
                MASK => bytes.extend_from_slice(b"<mask>"),
                SEP => bytes.extend_from_slice(b"<sep>"),
                i if i < RESERVED => {}
                i => bytes.extend_from_slice(self.token_bytes(i).unwrap_or_default()),
            }
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MAGIC}").unwrap();
        writeln!(s, "byte_fallback {}", self.byte_fallback).unwrap();
        let bytes: Vec<String> = (0..256)
            .filter(|&b| self.byte_ids[b].is_some())
            .map(|b| format!("{b:02x}"))
            .collect();
        writeln!(s, "bytes {}", bytes.join(" ")).unwrap();
        for (a, b) in &self.merges {
            writeln!(s, "merge {a} {b}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Vocab, TokenizerError> {
        let bad = |m: &str| TokenizerError::InvalidFile(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header"));
        }
        let fallback = match lines.next().and_then(|l| l.strip_prefix("byte_fallback ")) {
            Some("true") => true,
            Some("false") => false,
            _ => return Err(bad("missing byte_fallback line")),
        };
        let byte_line = lines.next().and_then(|l| l.strip_prefix("bytes")).ok_or_else(|| bad("missing bytes line"))?;
        let mut seen = [false; 256];
        for h in byte_line.split_whitespace() {
            let b = u8::from_str_radix(h, 16).map_err(|_| bad("bad byte"))?;
            seen[b as usize] = true;
        }
        let mut vocab = Vocab::with_bytes(fallback, &seen);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let rest = line.strip_prefix("merge ").ok_or_else(|| bad(line))?;
            let mut it = rest.split_whitespace().map(|x| x.parse::<u32>());
            let (Some(Ok(a)), Some(Ok(b)), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad(line));
            };
            let n = vocab.tokens.len() as u32;
            if a < RESERVED || b < RESERVED || a >= n || b >= n {
                return Err(bad(line));
            }
            vocab.push_merge((a, b));
        }
        Ok(vocab)
    }

    /// Hex SHA-256 of the serialized vocabulary, stored in checkpoints.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// The most frequent adjacent pair and its weighted count; ties resolve to the smallest pair.
pub fn most_frequent_pair(words: &[(Vec<u32>, u64)]) -> Option<((u32, u32), u64)> {
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    for (w, n) in words {
        for p in w.windows(2) {
            *counts.entry((p[0], p[1])).or_default() += n;
        }
    }
    counts
        .into_iter()
        .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then(pb.cmp(pa)))
}

fn apply_merge(word: &mut Vec<u32>, pair: (u32, u32), id: u32) {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == pair.0 && word[i + 1] == pair.1 {
            out.push(id);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    *word = out;
}
