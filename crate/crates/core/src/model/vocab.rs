use std::collections::HashMap;

use crate::TokenId;

pub const SOS_TEXT: &str = "<s>";
pub const EOS_TEXT: &str = "</s>";

/// Word vocabulary with the start token at id 0 and the end token at id 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut v = Self {
            words: Vec::new(),
            index: HashMap::new(),
        };
        v.intern(SOS_TEXT);
        v.intern(EOS_TEXT);
        v
    }
}

impl Vocab {
    pub const SOS: TokenId = 0;
    pub const EOS: TokenId = 1;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        let mut v = Self::default();
        for w in words {
            v.intern(w.as_ref());
        }
        v
    }

    pub fn intern(&mut self, word: &str) -> TokenId {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len() as TokenId;
        self.words.push(word.to_owned());
        self.index.insert(word.to_owned(), id);
        id
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Whitespace tokenization; unknown words are skipped.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace().filter_map(|w| self.id(w)).collect()
    }

    /// Every id a model may predict (all but the start token).
    pub fn predictable(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.words.len() as TokenId).filter(|&id| id != Self::SOS)
    }
}
