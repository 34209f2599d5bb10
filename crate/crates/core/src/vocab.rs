use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Character vocabulary. Ids 0 and 1 are reserved for `[UNK]` and `[SEP]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct Vocab {
    chars: Vec<char>,
    lookup: HashMap<char, u32>,
}

impl Vocab {
    pub const UNK: u32 = 0;
    pub const SEP: u32 = 1;
    const RESERVED: u32 = 2;

    /// Collects every character in first-appearance order (min frequency 1).
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Vocab {
            chars: Vec::new(),
            lookup: HashMap::new(),
        };
        for text in texts {
            vocab.extend(text);
        }
        vocab
    }

    pub fn extend(&mut self, text: &str) {
        for c in text.chars() {
            if !self.lookup.contains_key(&c) {
                self.lookup.insert(c, self.chars.len() as u32 + Self::RESERVED);
                self.chars.push(c);
            }
        }
    }

    /// Number of ids including the reserved ones.
    pub fn len(&self) -> usize {
        self.chars.len() + Self::RESERVED as usize
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn id(&self, c: char) -> u32 {
        self.lookup.get(&c).copied().unwrap_or(Self::UNK)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.chars().map(|c| self.id(c)).collect()
    }

    pub fn encode_chars(&self, chars: &[char]) -> Vec<u32> {
        chars.iter().map(|&c| self.id(c)).collect()
    }

    pub fn contains(&self, c: char) -> bool {
        self.lookup.contains_key(&c)
    }
}

impl From<String> for Vocab {
    fn from(chars: String) -> Self {
        Vocab::build([chars.as_str()])
    }
}

impl From<Vocab> for String {
    fn from(vocab: Vocab) -> Self {
        vocab.chars.into_iter().collect()
    }
}
