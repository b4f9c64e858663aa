//! Word-level tokenizer.
//!
//! A token is a word (run of ASCII letters or `_`), a single digit, or a
//! single punctuation character, optionally carrying one leading space.
//! Tag strings such as `<think>` are atomic and never carry a space.
//! `decode(encode(x))` reproduces `x` up to whitespace normalization.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::reward::{NEXT_STATE_CLOSE, NEXT_STATE_OPEN, THINK_CLOSE, THINK_OPEN};
use crate::util::fnv1a;

pub type TokenId = u32;
pub type TokenSeq = Vec<TokenId>;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const THINK_OPEN_ID: TokenId = 4;
pub const THINK_CLOSE_ID: TokenId = 5;
pub const NEXT_STATE_OPEN_ID: TokenId = 6;
pub const NEXT_STATE_CLOSE_ID: TokenId = 7;

pub const SPECIALS: &[&str] = &[
    "<pad>",
    "<bos>",
    "<eos>",
    "<unk>",
    THINK_OPEN,
    THINK_CLOSE,
    NEXT_STATE_OPEN,
    NEXT_STATE_CLOSE,
];

const TAGS: &[&str] = &[THINK_OPEN, THINK_CLOSE, NEXT_STATE_OPEN, NEXT_STATE_CLOSE];

/// Split text into token strings.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut space = false;
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            space = true;
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c == '<' {
            if let Some(tag) = TAGS.iter().find(|t| rest.starts_with(*t)) {
                out.push(tag.to_string());
                rest = &rest[tag.len()..];
                space = false;
                continue;
            }
        }
        let len = if c.is_ascii_alphabetic() || c == '_' {
            rest.find(|ch: char| !(ch.is_ascii_alphabetic() || ch == '_'))
                .unwrap_or(rest.len())
        } else {
            c.len_utf8()
        };
        let piece = &rest[..len];
        out.push(if space {
            format!(" {piece}")
        } else {
            piece.to_string()
        });
        space = false;
        rest = &rest[len..];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.id_to_token.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != *SPECIALS {
            return Err(serde::de::Error::custom("vocabulary must start with the special tokens"));
        }
        Ok(Vocab::from_tokens(tokens))
    }
}

impl Vocab {
    fn from_tokens(id_to_token: Vec<String>) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self {
            id_to_token,
            token_to_id,
        }
    }

    /// Specials first, then corpus tokens by descending frequency, ties
    /// broken lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in corpus {
            for t in tokenize(text.as_ref()) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !SPECIALS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode(&self, text: &str) -> TokenSeq {
        tokenize(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect()
    }

    /// Concatenate token strings, dropping PAD/BOS/EOS.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|id| !matches!(**id, PAD | BOS | EOS))
            .filter_map(|id| self.token(*id))
            .collect()
    }

    /// Stable fingerprint stored alongside model parameters.
    pub fn hash(&self) -> u64 {
        fnv1a(self.id_to_token.join("\u{1f}").as_bytes())
    }

    /// Fraction of tokens in `text` that map to UNK.
    pub fn unk_rate(&self, text: &str) -> f64 {
        let ids = self.encode(text);
        if ids.is_empty() {
            return 0.0;
        }
        ids.iter().filter(|i| **i == UNK).count() as f64 / ids.len() as f64
    }
}

/// Collapse whitespace the way the tokenizer sees it.
pub fn normalize_text(text: &str) -> String {
    tokenize(text).concat().trim_start().to_string()
}
