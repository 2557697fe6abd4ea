//! The discrete alphabet shared by both policies.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Token(pub u16);

impl Token {
    pub fn index(self) -> usize {
        usize::from(self.0)
    }
}

pub type TokenSequence = Vec<Token>;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const SEP: &str = "<sep>";
pub const TEXT_BEGIN: &str = "<text>";
pub const TEXT_END: &str = "</text>";
pub const ANSWER: &str = "answer";
pub const CHOICE_LABELS: [&str; 4] = ["(A)", "(B)", "(C)", "(D)"];

/// Point labels available to scenes.
pub const POINT_LABELS: &str = "ABCDEFGH";
/// Grid coordinates run over `0..GRID`.
pub const GRID: i32 = 10;
/// Angle magnitudes are multiples of this step.
pub const ANGLE_STEP: u32 = 10;

/// Ordered list of distinct token strings with a stable index assignment.
#[derive(Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, Token>,
    hash: [u8; 32],
    pad: Token,
    eos: Token,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("len", &self.tokens.len())
            .field("hash", &hex(&self.hash[..8]))
            .finish()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Vocabulary {
    /// Builds a vocabulary. Tokens must be distinct and include `<pad>` and `<eos>`.
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.len() > usize::from(u16::MAX) {
            return Err(Error::Argument(format!(
                "vocabulary of {} tokens is too large",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), Token(i as u16)).is_some() {
                return Err(Error::Argument(format!("duplicate vocabulary token {t:?}")));
            }
        }
        let pad = *index
            .get(PAD)
            .ok_or_else(|| Error::Argument("vocabulary lacks <pad>".into()))?;
        let eos = *index
            .get(EOS)
            .ok_or_else(|| Error::Argument("vocabulary lacks <eos>".into()))?;
        let mut hasher = Sha256::new();
        for t in &tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        let hash = hasher.finalize().into();
        Ok(Vocabulary {
            tokens,
            index,
            hash,
            pad,
            eos,
        })
    }

    /// The vocabulary covering the geometry grammar: drawing commands,
    /// statements, questions, choices and control tokens.
    pub fn standard() -> &'static Vocabulary {
        static STANDARD: OnceLock<Vocabulary> = OnceLock::new();
        STANDARD.get_or_init(|| {
            let mut t: Vec<String> = [PAD, BOS, EOS, SEP, TEXT_BEGIN, TEXT_END]
                .iter()
                .map(|s| s.to_string())
                .collect();
            for kw in ["POINT", "SEG", "POLY", "LINE", "TICK", "ARROW", "ANGLE"] {
                t.push(kw.into());
            }
            for kw in ["tri", "quad", "straight", "iso", "par", "angle"] {
                t.push(kw.into());
            }
            t.push("find".into());
            t.push(ANSWER.into());
            t.push("x".into());
            t.extend(CHOICE_LABELS.iter().map(|s| s.to_string()));
            t.extend(POINT_LABELS.chars().map(|c| c.to_string()));
            t.extend((0..GRID).map(|c| c.to_string()));
            t.extend((1..18).map(|k| (k * ANGLE_STEP).to_string()));
            Vocabulary::new(t).expect("standard vocabulary is well formed")
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the newline-joined token list.
    pub fn content_hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn pad(&self) -> Token {
        self.pad
    }

    pub fn eos(&self) -> Token {
        self.eos
    }

    pub fn id(&self, token: &str) -> Result<Token> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    /// Like [`Vocabulary::id`] for tokens the caller knows are present.
    pub fn get(&self, token: &str) -> Token {
        self.id(token).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn contains(&self, token: Token) -> bool {
        token.index() < self.tokens.len()
    }

    pub fn check(&self, seq: &[Token]) -> Result<()> {
        match seq.iter().find(|t| !self.contains(**t)) {
            Some(t) => Err(Error::TokenOutOfRange(t.index(), self.len())),
            None => Ok(()),
        }
    }

    pub fn name(&self, token: Token) -> &str {
        &self.tokens[token.index()]
    }

    /// Encodes whitespace-separated token text.
    pub fn encode(&self, text: &str) -> Result<TokenSequence> {
        text.split_whitespace().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, seq: &[Token]) -> String {
        seq.iter()
            .map(|&t| self.name(t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_vocabulary_round_trips_text() {
        let v = Vocabulary::standard();
        let seq = v.encode("POINT A 3 4 ANGLE B A C 40 <eos>").unwrap();
        assert_eq!(v.decode(&seq), "POINT A 3 4 ANGLE B A C 40 <eos>");
        assert!(v.encode("banana").is_err());
    }

    #[test]
    fn duplicate_or_missing_specials_rejected() {
        assert!(Vocabulary::new(["<pad>", "<eos>", "a", "a"]).is_err());
        assert!(Vocabulary::new(["<pad>", "a"]).is_err());
        assert!(Vocabulary::new(["<pad>", "<eos>", "a"]).is_ok());
    }

    #[test]
    fn hash_tracks_content_and_order() {
        let a = Vocabulary::new(["<pad>", "<eos>", "a", "b"]).unwrap();
        let b = Vocabulary::new(["<pad>", "<eos>", "b", "a"]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), a.clone().content_hash());
    }
}
