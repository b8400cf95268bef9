//! Next-token scoring oracles and the budget meter that charges for them.

mod bridge;
mod markov;
mod table;
mod vocab;

use thiserror::Error;

use crate::TokenId;

pub use bridge::{serve, BridgeModel, PROTOCOL_VERSION};
pub use markov::{train_markov, MarkovModel};
pub use table::TableModel;
pub use vocab::{Vocab, EOS_TEXT, SOS_TEXT};

/// Top-k expansions considered per node unless configured otherwise.
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("search budget of {budget} model calls exhausted")]
    BudgetExhausted { budget: usize },
    #[error("model configuration error: {0}")]
    Config(String),
    #[error("bridge i/o error: {0}")]
    Io(String),
    #[error("bridge did not answer within {millis} ms")]
    Timeout { millis: u64 },
    #[error("bridge protocol error: {message} (payload: {payload})")]
    Protocol { message: String, payload: String },
}

/// Top-k next-token log-probabilities, best first.
///
/// Ordering is total: descending log-probability, ties broken by the lower
/// token id.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenDistribution {
    entries: Vec<(TokenId, f64)>,
}

impl TokenDistribution {
    /// Sorts, drops zero-probability entries and keeps the best `top_k`.
    pub fn new(mut entries: Vec<(TokenId, f64)>, top_k: usize) -> Self {
        entries.retain(|(_, lp)| lp.is_finite());
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        entries.dedup_by_key(|e| e.0);
        entries.truncate(top_k);
        Self { entries }
    }

    pub fn entries(&self) -> &[(TokenId, f64)] {
        &self.entries
    }

    pub fn best(&self) -> Option<(TokenId, f64)> {
        self.entries.first().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncated(&self, top_k: usize) -> Self {
        Self {
            entries: self.entries.iter().take(top_k).copied().collect(),
        }
    }

    pub fn log_prob(&self, token: TokenId) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == token).map(|e| e.1)
    }
}

/// The conditional generation model `p(y_t | y_<t, x)`.
///
/// Implementations must be pure: the same `(prefix, source)` always yields
/// the same distribution.
pub trait ScoringModel {
    /// `prefix` starts with the start-of-sequence token.
    fn score(
        &self,
        prefix: &[TokenId],
        source: &[TokenId],
        top_k: usize,
    ) -> Result<TokenDistribution, ModelError>;

    fn vocab_size(&self) -> usize;

    fn sos_id(&self) -> TokenId;

    fn eos_id(&self) -> TokenId;

    fn token_text(&self, id: TokenId) -> String;

    /// Maps a source line to token ids.
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, ModelError>;
}

impl<M: ScoringModel + ?Sized> ScoringModel for &M {
    fn score(&self, prefix: &[TokenId], source: &[TokenId], top_k: usize) -> Result<TokenDistribution, ModelError> {
        (**self).score(prefix, source, top_k)
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn sos_id(&self) -> TokenId {
        (**self).sos_id()
    }
    fn eos_id(&self) -> TokenId {
        (**self).eos_id()
    }
    fn token_text(&self, id: TokenId) -> String {
        (**self).token_text(id)
    }
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, ModelError> {
        (**self).encode(text)
    }
}

impl<M: ScoringModel + ?Sized> ScoringModel for Box<M> {
    fn score(&self, prefix: &[TokenId], source: &[TokenId], top_k: usize) -> Result<TokenDistribution, ModelError> {
        (**self).score(prefix, source, top_k)
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn sos_id(&self) -> TokenId {
        (**self).sos_id()
    }
    fn eos_id(&self) -> TokenId {
        (**self).eos_id()
    }
    fn token_text(&self, id: TokenId) -> String {
        (**self).token_text(id)
    }
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, ModelError> {
        (**self).encode(text)
    }
}

/// Counts model calls against a fixed allowance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BudgetMeter {
    budget: usize,
    spent: usize,
}

impl BudgetMeter {
    pub fn new(budget: usize) -> Self {
        Self { budget, spent: 0 }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn spent(&self) -> usize {
        self.spent
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.spent
    }

    pub fn exhausted(&self) -> bool {
        self.spent >= self.budget
    }

    /// One metered model call. The only way `spent` ever grows.
    pub fn score<M: ScoringModel + ?Sized>(
        &mut self,
        model: &M,
        prefix: &[TokenId],
        source: &[TokenId],
        top_k: usize,
    ) -> Result<TokenDistribution, ModelError> {
        if self.exhausted() {
            return Err(ModelError::BudgetExhausted {
                budget: self.budget,
            });
        }
        self.spent += 1;
        model.score(prefix, source, top_k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_orders_and_truncates() {
        let d = TokenDistribution::new(
            vec![(4, -2.0), (2, -0.5), (3, -0.5), (1, f64::NEG_INFINITY), (7, -3.0)],
            3,
        );
        assert_eq!(d.entries(), &[(2, -0.5), (3, -0.5), (4, -2.0)]);
        assert_eq!(d.best(), Some((2, -0.5)));
        let again = TokenDistribution::new(d.entries().to_vec(), 3);
        assert_eq!(again, d);
    }

    #[test]
    fn meter_counts_every_call_and_stops_at_budget() {
        let model = TableModel::uniform(&["a", "b"]);
        let mut meter = BudgetMeter::new(2);
        let p = [model.sos_id()];
        let first = meter.score(&model, &p, &[], 5).unwrap();
        let second = meter.score(&model, &p, &[], 5).unwrap();
        assert_eq!(first, second);
        assert_eq!(meter.spent(), 2);
        assert_eq!(
            meter.score(&model, &p, &[], 5),
            Err(ModelError::BudgetExhausted { budget: 2 })
        );
        assert_eq!(meter.spent(), 2);
    }
}
