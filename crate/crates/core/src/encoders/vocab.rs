//! Tokenization and the vocabulary file.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

pub const START: &str = "[S]";
pub const END: &str = "[E]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";
pub const SPECIAL_TOKENS: [&str; 4] = [START, END, SEP, UNK];

/// Characters a canonical number may contain.
pub const NUMBER_CHARS: [char; 13] = ['0', '1', '2', '3', '4', '5', '6', '7', '8', '9', '.', '-', ','];

/// Lower-cased word tokens; punctuation separates words and is dropped, `_` stays inside words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Word tokens, number characters and the special tokens, each with a unique id.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Specials first, then number characters, then sorted words from `texts`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(NUMBER_CHARS.iter().map(|c| format!("#{c}")));
        let words: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        tokens.extend(words);
        Self { tokens }
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

    pub fn id(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    /// Word id, falling back to `[UNK]`.
    pub fn word_id(&self, word: &str) -> usize {
        self.id(word).unwrap_or(3)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let tokens: Vec<String> = std::fs::read_to_string(path)?.lines().map(str::to_string).collect();
        let unique: BTreeSet<&String> = tokens.iter().collect();
        if unique.len() != tokens.len() {
            return Err(Error::Encoding(format!("{}: duplicate tokens", path.display())));
        }
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::Encoding(format!(
                    "{}: special token {s} missing",
                    path.display()
                )));
            }
        }
        Ok(Self { tokens })
    }
}
