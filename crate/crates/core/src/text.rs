//! Tokens and the closed vocabulary shared by the environment and the networks.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Index into a [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(pub u16);

impl Token {
    /// Placeholder for a missing history action.
    pub const PAD: Token = Token(0);
    /// Segment separator; also the decoder's start symbol.
    pub const SEP: Token = Token(1);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Immutable, cheaply clonable token sequence.
pub type Seq = Arc<[Token]>;

pub const PAD_WORD: &str = "<pad>";
pub const SEP_WORD: &str = "<sep>";

#[derive(Clone, Debug)]
pub struct Vocabulary {
    words: Vec<String>,
    ids: HashMap<String, Token>,
}

impl Vocabulary {
    /// Builds a vocabulary from `words`, after the two reserved entries.
    /// Duplicates are ignored.
    pub fn new<'a>(words: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut vocab = Vocabulary {
            words: Vec::new(),
            ids: HashMap::new(),
        };
        vocab.insert(PAD_WORD);
        vocab.insert(SEP_WORD);
        for w in words {
            if w.is_empty() || w.contains(char::is_whitespace) {
                return Err(Error::InvalidSpec(format!("bad vocabulary word {w:?}")));
            }
            vocab.insert(w);
        }
        if vocab.words.len() > u16::MAX as usize {
            return Err(Error::InvalidSpec("vocabulary too large".into()));
        }
        Ok(vocab)
    }

    fn insert(&mut self, w: &str) {
        if !self.ids.contains_key(w) {
            let t = Token(self.words.len() as u16);
            self.words.push(w.to_string());
            self.ids.insert(w.to_string(), t);
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<Token> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, t: Token) -> &str {
        &self.words[t.index()]
    }

    /// Whitespace tokenization. Every word must already be in the vocabulary.
    pub fn tokenize(&self, text: &str) -> Result<Seq> {
        text.split_whitespace()
            .map(|w| {
                self.get(w)
                    .ok_or_else(|| Error::InvalidSpec(format!("word {w:?} not in vocabulary")))
            })
            .collect()
    }

    pub fn detokenize(&self, tokens: &[Token]) -> String {
        let words: Vec<&str> = tokens.iter().map(|&t| self.word(t)).collect();
        words.join(" ")
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_tokens_come_first() {
        let v = Vocabulary::new(["go", "north"]).unwrap();
        assert_eq!(v.get(PAD_WORD), Some(Token::PAD));
        assert_eq!(v.get(SEP_WORD), Some(Token::SEP));
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn tokenize_roundtrip() {
        let v = Vocabulary::new(["go", "north", "go"]).unwrap();
        let seq = v.tokenize("go  north").unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(v.detokenize(&seq), "go north");
        assert!(v.tokenize("go south").is_err());
    }
}
