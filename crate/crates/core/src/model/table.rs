use std::collections::HashMap;

use serde::Deserialize;

use super::{ModelError, ScoringModel, TokenDistribution, Vocab};
use crate::TokenId;

/// Explicit prefix → distribution map for hand-built cases.
///
/// Prefixes are keyed by their generated tokens (the start token is
/// implicit). Unlisted prefixes get the default row, which initially puts
/// all mass on the end token.
#[derive(Clone, Debug)]
pub struct TableModel {
    vocab: Vocab,
    rows: HashMap<Vec<TokenId>, TokenDistribution>,
    default: TokenDistribution,
}

#[derive(Deserialize)]
struct TableFile {
    vocab: Vec<String>,
    #[serde(default)]
    rows: Vec<RowFile>,
    #[serde(default)]
    default: Option<Vec<(String, f64)>>,
}

#[derive(Deserialize)]
struct RowFile {
    prefix: Vec<String>,
    next: Vec<(String, f64)>,
}

impl TableModel {
    pub fn new(vocab: Vocab) -> Self {
        Self {
            vocab,
            rows: HashMap::new(),
            default: TokenDistribution::new(vec![(Vocab::EOS, 0.0)], usize::MAX),
        }
    }

    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        Self::new(Vocab::from_words(words))
    }

    /// Every prefix gets the uniform distribution over `words` and the end
    /// token.
    pub fn uniform<S: AsRef<str>>(words: &[S]) -> Self {
        let mut m = Self::from_words(words);
        let n = m.vocab.len() - 1;
        let lp = -(n as f64).ln();
        let row = m.vocab.predictable().map(|t| (t, lp)).collect();
        m.set_default(row).expect("uniform row is valid");
        m
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn id(&self, word: &str) -> TokenId {
        self.vocab
            .id(word)
            .unwrap_or_else(|| panic!("word {word:?} is not in the table vocabulary"))
    }

    fn validate(&self, entries: &[(TokenId, f64)]) -> Result<(), ModelError> {
        for &(t, lp) in entries {
            if t == Vocab::SOS || t as usize >= self.vocab.len() {
                return Err(ModelError::Config(format!("token id {t} cannot be predicted")));
            }
            if !(lp <= 0.0) || lp.is_infinite() {
                return Err(ModelError::Config(format!("log-probability {lp} for token {t} is not in (-inf, 0]")));
            }
        }
        Ok(())
    }

    /// Sets the distribution after the generated tokens `prefix`.
    pub fn set_row(&mut self, prefix: &[TokenId], entries: Vec<(TokenId, f64)>) -> Result<(), ModelError> {
        self.validate(&entries)?;
        self.rows
            .insert(prefix.to_vec(), TokenDistribution::new(entries, usize::MAX));
        Ok(())
    }

    pub fn set_default(&mut self, entries: Vec<(TokenId, f64)>) -> Result<(), ModelError> {
        self.validate(&entries)?;
        self.default = TokenDistribution::new(entries, usize::MAX);
        Ok(())
    }

    /// Word-level convenience for [`TableModel::set_row`]; panics on unknown
    /// words.
    pub fn with_row(mut self, prefix: &[&str], next: &[(&str, f64)]) -> Self {
        let prefix: Vec<TokenId> = prefix.iter().map(|w| self.id(w)).collect();
        let next = next.iter().map(|(w, lp)| (self.id(w), *lp)).collect();
        self.set_row(&prefix, next).expect("valid table row");
        self
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    /// Parses the JSON table format:
    /// `{"vocab": [...], "rows": [{"prefix": [...], "next": [[word, logprob], ...]}], "default": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: TableFile = serde_json::from_str(text).map_err(|e| ModelError::Config(format!("table model: {e}")))?;
        let mut m = Self::from_words(&file.vocab);
        let lookup = |m: &Self, w: &str| {
            m.vocab
                .id(w)
                .ok_or_else(|| ModelError::Config(format!("table model: unknown word {w:?}")))
        };
        for row in file.rows {
            let prefix = row
                .prefix
                .iter()
                .map(|w| lookup(&m, w))
                .collect::<Result<Vec<_>, _>>()?;
            let next = row
                .next
                .iter()
                .map(|(w, lp)| Ok((lookup(&m, w)?, *lp)))
                .collect::<Result<Vec<_>, ModelError>>()?;
            m.set_row(&prefix, next)?;
        }
        if let Some(default) = file.default {
            let next = default
                .iter()
                .map(|(w, lp)| Ok((lookup(&m, w)?, *lp)))
                .collect::<Result<Vec<_>, ModelError>>()?;
            m.set_default(next)?;
        }
        Ok(m)
    }
}

impl ScoringModel for TableModel {
    fn score(&self, prefix: &[TokenId], _source: &[TokenId], top_k: usize) -> Result<TokenDistribution, ModelError> {
        let generated = prefix.get(1..).unwrap_or(&[]);
        let row = self.rows.get(generated).unwrap_or(&self.default);
        Ok(row.truncated(top_k))
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn sos_id(&self) -> TokenId {
        Vocab::SOS
    }

    fn eos_id(&self) -> TokenId {
        Vocab::EOS
    }

    fn token_text(&self, id: TokenId) -> String {
        self.vocab.word(id).map_or_else(|| id.to_string(), str::to_owned)
    }

    fn encode(&self, text: &str) -> Result<Vec<TokenId>, ModelError> {
        Ok(self.vocab.encode(text))
    }
}
