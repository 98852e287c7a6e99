//! Tokenization, vocabularies and fixed-length id sequences.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";

/// Default padded length for queries.
pub const DEFAULT_QUERY_MAX_LEN: usize = 10;
/// Default padded length for product titles.
pub const DEFAULT_TITLE_MAX_LEN: usize = 30;

/// Lowercased whitespace split.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self {
            token_to_id: BTreeMap::new(),
            id_to_token: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary from tokens listed in id order, starting at id 2.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::default();
        for token in tokens {
            let token = token.into();
            if token == PAD_TOKEN || token == UNK_TOKEN || token.is_empty() {
                return Err(Error::Precondition(alloc::format!(
                    "reserved or empty token `{token}` in vocabulary listing"
                )));
            }
            if vocab.token_to_id.contains_key(&token) {
                return Err(Error::Precondition(alloc::format!(
                    "duplicate vocabulary token `{token}`"
                )));
            }
            let id = vocab.id_to_token.len() as u32;
            vocab.token_to_id.insert(token.clone(), id);
            vocab.id_to_token.push(token);
        }
        Ok(vocab)
    }

    /// Entry count including the two reserved ids.
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Non-reserved tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token[2..]
    }

    /// Serialized text form: one token per line, reserved entries first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for token in &self.id_to_token {
            out.push_str(token);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(PAD_TOKEN) || lines.next() != Some(UNK_TOKEN) {
            return Err(Error::Precondition(
                "vocabulary file must start with <PAD> and <UNK>".to_string(),
            ));
        }
        Self::from_tokens(lines.filter(|l| !l.is_empty()))
    }

    /// FNV-1a over the serialized form; used to tie checkpoints to a vocabulary.
    pub fn content_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.to_text().bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash
    }

    pub fn decode(&self, seq: &TextSequence) -> Vec<String> {
        seq.valid_ids()
            .iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }
}

/// Counts tokens and keeps those seen at least `min_freq` times, most
/// frequent first with lexicographic tie-break, capped at `max_vocab - 2`.
pub fn build_vocab<'a, I, T>(streams: I, min_freq: usize, max_vocab: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = T>,
    T: IntoIterator<Item = &'a str>,
{
    if min_freq == 0 {
        return Err(Error::config("min_freq", "must be at least 1"));
    }
    if max_vocab < 2 {
        return Err(Error::config("max_vocab", "must leave room for PAD and UNK"));
    }
    let mut counts: BTreeMap<&'a str, usize> = BTreeMap::new();
    for stream in streams {
        for token in stream {
            if token.is_empty() || token == PAD_TOKEN || token == UNK_TOKEN {
                continue;
            }
            *counts.entry(token).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_freq)
        .collect();
    // BTreeMap iteration is already lexicographic; a stable sort keeps that order on ties.
    ranked.sort_by_key(|&(_, c)| core::cmp::Reverse(c));
    ranked.truncate(max_vocab - 2);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t))
}

/// Token ids padded to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSequence {
    pub ids: Vec<u32>,
    pub valid_len: usize,
}

impl TextSequence {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    pub fn valid_ids(&self) -> &[u32] {
        &self.ids[..self.valid_len]
    }

    /// Same content re-padded to another length (truncating if shorter).
    pub fn repad(&self, max_len: usize) -> TextSequence {
        let valid_len = self.valid_len.min(max_len);
        let mut ids = vec![PAD; max_len];
        ids[..valid_len].copy_from_slice(&self.ids[..valid_len]);
        TextSequence { ids, valid_len }
    }

    pub fn check(&self) -> Result<()> {
        if self.valid_len == 0 {
            return Err(Error::Precondition("sequence has valid_len 0".to_string()));
        }
        if self.valid_len > self.ids.len() {
            return Err(Error::Precondition(alloc::format!(
                "valid_len {} exceeds max_len {}",
                self.valid_len,
                self.ids.len()
            )));
        }
        Ok(())
    }
}

/// Maps tokens to ids; unknown tokens become UNK. Empty input encodes as a
/// single UNK so every sequence has at least one valid position.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> TextSequence {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut ids = vec![PAD; max_len];
    if tokens.is_empty() {
        ids[0] = UNK;
        return TextSequence { ids, valid_len: 1 };
    }
    let valid_len = tokens.len().min(max_len);
    for (slot, token) in ids.iter_mut().zip(tokens.iter()) {
        *slot = vocab.id(token.as_ref()).unwrap_or(UNK);
    }
    TextSequence { ids, valid_len }
}

/// A human-style judgement: label 1 is Good, 0 is Bad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPair {
    pub query: TextSequence,
    pub title: TextSequence,
    pub label: u8,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn vocab_of(tokens: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(tokens.iter().copied()).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Red Dress"), vec!["red", "dress"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("红色 连衣裙"), vec!["红色", "连衣裙"]);
        assert_eq!(tokenize("  a\tB\n c "), vec!["a", "b", "c"]);
    }

    #[test]
    fn build_vocab_orders_by_frequency() {
        let v = build_vocab([vec!["a", "a", "b"]], 1, 10).unwrap();
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
        assert_eq!(v.size(), 4);
    }

    #[test]
    fn build_vocab_min_freq_excludes_all() {
        let v = build_vocab([vec!["a", "b"]], 2, 10).unwrap();
        assert_eq!(v.size(), 2);
        let empty: [Vec<&str>; 0] = [];
        assert_eq!(build_vocab(empty, 1, 10).unwrap().size(), 2);
    }

    #[test]
    fn build_vocab_ties_and_truncation() {
        let v = build_vocab([vec!["z", "y", "x", "z"]], 1, 4).unwrap();
        assert_eq!(v.tokens(), &["z".to_string(), "x".to_string()]);
        assert!(build_vocab([vec!["a"]], 0, 4).is_err());
    }

    #[test]
    fn encode_examples() {
        let v = vocab_of(&["red", "dress"]);
        let s = encode(&["red", "dress"], &v, 4);
        assert_eq!(s.ids, vec![2, 3, 0, 0]);
        assert_eq!(s.valid_len, 2);

        let s = encode(&["azure"], &v, 4);
        assert_eq!(s.ids, vec![1, 0, 0, 0]);
        assert_eq!(s.valid_len, 1);

        let s = encode(&["red", "dress", "red", "red", "dress", "x"], &v, 4);
        assert_eq!(s.ids, vec![2, 3, 2, 2]);
        assert_eq!(s.valid_len, 4);

        let empty: [&str; 0] = [];
        let s = encode(&empty, &v, 3);
        assert_eq!(s.ids, vec![UNK, PAD, PAD]);
        assert_eq!(s.valid_len, 1);
    }

    #[test]
    fn text_form_round_trips() {
        let v = vocab_of(&["red", "dress", "连衣裙"]);
        let text = v.to_text();
        assert!(text.starts_with("<PAD>\n<UNK>\nred\n"));
        assert_eq!(Vocabulary::from_text(&text).unwrap(), v);
        assert!(Vocabulary::from_text("red\n").is_err());
        assert_ne!(v.content_hash(), vocab_of(&["dress", "red"]).content_hash());
    }

    #[test]
    fn reserved_tokens_rejected() {
        assert!(Vocabulary::from_tokens(["<PAD>"]).is_err());
        assert!(Vocabulary::from_tokens(["a", "a"]).is_err());
    }

    proptest! {
        #[test]
        fn encode_round_trips_in_vocab_tokens(
            picks in proptest::collection::vec(0usize..6, 1..8),
            max_len in 1usize..10,
        ) {
            let words = ["a", "b", "c", "d", "e", "f"];
            let v = vocab_of(&words);
            let tokens: Vec<&str> = picks.iter().map(|&i| words[i]).collect();
            let seq = encode(&tokens, &v, max_len);
            prop_assert_eq!(seq.ids.len(), max_len);
            prop_assert!(seq.valid_len <= max_len && seq.valid_len >= 1);
            prop_assert!(seq.ids[..seq.valid_len].iter().all(|&id| id != PAD));
            prop_assert!(seq.ids[seq.valid_len..].iter().all(|&id| id == PAD));
            if tokens.len() <= max_len {
                let decoded = v.decode(&seq);
                prop_assert_eq!(decoded, tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>());
            }
            prop_assert_eq!(encode(&tokens, &v, max_len), seq);
        }
    }
}
