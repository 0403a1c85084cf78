use std::collections::{BTreeSet, HashMap};

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const IMG: TokenId = 3;
pub const HUM: TokenId = 4;
pub const SYS: TokenId = 5;

const SPECIALS: [&str; 6] = ["<pad>", "<bos>", "<eos>", "<img>", "<hum>", "<sys>"];

/// Character-level vocabulary: six specials followed by the sorted alphabet
/// harvested from a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    chars: Vec<char>,
    index: HashMap<char, TokenId>,
}

impl Vocabulary {
    pub fn from_texts<'a, I>(texts: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut alphabet = BTreeSet::new();
        for t in texts {
            alphabet.extend(t.nfc());
        }
        Self::from_chars(alphabet)
    }

    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Self {
        let chars: Vec<char> = chars.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, (i + SPECIALS.len()) as TokenId))
            .collect();
        Self { chars, index }
    }

    pub fn len(&self) -> usize {
        SPECIALS.len() + self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn alphabet(&self) -> &[char] {
        &self.chars
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < SPECIALS.len()
    }

    pub fn symbol(&self, id: TokenId) -> Option<String> {
        let i = id as usize;
        if i < SPECIALS.len() {
            Some(SPECIALS[i].to_string())
        } else {
            self.chars.get(i - SPECIALS.len()).map(|c| c.to_string())
        }
    }

    /// Maps each character to its id; lists every out-of-vocabulary character on failure.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut ids = Vec::with_capacity(text.len());
        let mut missing = BTreeSet::new();
        for c in text.chars() {
            match self.index.get(&c) {
                Some(&id) => ids.push(id),
                None => {
                    missing.insert(c);
                }
            }
        }
        if missing.is_empty() {
            Ok(ids)
        } else {
            Err(Error::OutOfVocabulary(missing.into_iter().collect()))
        }
    }

    /// Inverse of [`encode`](Self::encode); special ids are dropped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| !Self::is_special(id))
            .filter_map(|&id| self.chars.get(id as usize - SPECIALS.len()))
            .collect()
    }
}
