use std::collections::HashMap;
use std::io::BufRead;

use super::{ModelError, ScoringModel, TokenDistribution, Vocab};
use crate::TokenId;

#[derive(Clone, Debug)]
struct Row {
    /// Observed continuations, most frequent first, ties by lower id.
    counts: Vec<(TokenId, u64)>,
    total: u64,
}

/// Order-`r` Markov chain over words, trained by counting with add-δ
/// smoothing.
///
/// The next-token distribution depends only on the last `r` tokens of the
/// prefix (left-padded with the start token), so any two prefixes sharing
/// their last `r` tokens are scored identically.
#[derive(Clone, Debug)]
pub struct MarkovModel {
    order: usize,
    smoothing: f64,
    vocab: Vocab,
    rows: HashMap<Vec<TokenId>, Row>,
}

/// Trains a [`MarkovModel`] from a corpus with one whitespace-tokenized
/// sequence per line. Blank lines are ignored.
pub fn train_markov<R: BufRead>(corpus: R, order: usize, smoothing: f64) -> Result<MarkovModel, ModelError> {
    if order == 0 {
        return Err(ModelError::Config("markov order must be at least 1".into()));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(ModelError::Config(format!("invalid smoothing {smoothing}")));
    }
    let mut vocab = Vocab::new();
    let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
    let mut sequences = 0usize;
    for line in corpus.lines() {
        let line = line.map_err(|e| ModelError::Io(e.to_string()))?;
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        sequences += 1;
        let mut seq = vec![Vocab::SOS; order];
        seq.extend(words.iter().map(|w| vocab.intern(w)));
        seq.push(Vocab::EOS);
        for i in order..seq.len() {
            *counts
                .entry(seq[i - order..i].to_vec())
                .or_default()
                .entry(seq[i])
                .or_default() += 1;
        }
    }
    if sequences == 0 {
        return Err(ModelError::Config("markov corpus is empty".into()));
    }
    let rows = counts
        .into_iter()
        .map(|(ctx, next)| {
            let mut counts: Vec<_> = next.into_iter().collect();
            counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let total = counts.iter().map(|c| c.1).sum();
            (ctx, Row { counts, total })
        })
        .collect();
    Ok(MarkovModel {
        order,
        smoothing,
        vocab,
        rows,
    })
}

impl MarkovModel {
    pub fn from_text(corpus: &str, order: usize, smoothing: f64) -> Result<Self, ModelError> {
        train_markov(corpus.as_bytes(), order, smoothing)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// The last `order` tokens of `prefix`, left-padded with the start token.
    pub fn context(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let take = prefix.len().min(self.order);
        let mut ctx = vec![Vocab::SOS; self.order - take];
        ctx.extend_from_slice(&prefix[prefix.len() - take..]);
        ctx
    }

    fn predictable_count(&self) -> usize {
        self.vocab.len() - 1
    }

    /// Probability of `token` after `prefix` over the full vocabulary.
    pub fn probability(&self, prefix: &[TokenId], token: TokenId) -> f64 {
        if token == Vocab::SOS || token as usize >= self.vocab.len() {
            return 0.0;
        }
        let v = self.predictable_count() as f64;
        match self.rows.get(&self.context(prefix)) {
            Some(row) => {
                let c = row
                    .counts
                    .iter()
                    .find(|e| e.0 == token)
                    .map_or(0, |e| e.1) as f64;
                (c + self.smoothing) / (row.total as f64 + self.smoothing * v)
            }
            None => 1.0 / v,
        }
    }

    fn row_entries(&self, prefix: &[TokenId], top_k: usize) -> Vec<(TokenId, f64)> {
        let v = self.predictable_count();
        let Some(row) = self.rows.get(&self.context(prefix)) else {
            let lp = -(v as f64).ln();
            return self.vocab.predictable().take(top_k).map(|t| (t, lp)).collect();
        };
        let z = row.total as f64 + self.smoothing * v as f64;
        let mut out: Vec<(TokenId, f64)> = row
            .counts
            .iter()
            .take(top_k)
            .map(|&(t, c)| (t, ((c as f64 + self.smoothing) / z).ln()))
            .collect();
        if self.smoothing > 0.0 && out.len() < top_k {
            let lp = (self.smoothing / z).ln();
            let unseen = self
                .vocab
                .predictable()
                .filter(|t| !row.counts.iter().any(|e| e.0 == *t));
            out.extend(unseen.take(top_k - out.len()).map(|t| (t, lp)));
        }
        out
    }
}

impl ScoringModel for MarkovModel {
    fn score(&self, prefix: &[TokenId], _source: &[TokenId], top_k: usize) -> Result<TokenDistribution, ModelError> {
        Ok(TokenDistribution::new(self.row_entries(prefix, top_k), top_k))
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
