//! Lattice decoding for sequence generation models.
//!
//! A search explores a scoring model's output space under a fixed budget of
//! model calls and records everything it finds in a [`Lattice`]: a DAG of
//! token nodes whose start-to-end walks are the candidate outputs. The
//! best-first search in [`search::decode_bfs`] drives every expanded node to
//! completion, and the [`recomb`] strategies merge hypotheses that share a
//! suffix so that many more complete paths fit in the same budget.
//!
//! ```
//! use lattice_search::model::MarkovModel;
//! use lattice_search::search::{decode, Algorithm, SearchConfig};
//! use lattice_search::recomb::{RecombConfig, Strategy};
//!
//! let model = MarkovModel::from_text("the cat sat on the mat\nthe dog sat on the rug", 1, 0.0).unwrap();
//! let mut config = SearchConfig::new(Algorithm::Bfs);
//! config.budget = Some(30);
//! config.max_len = 8;
//! config.recomb = RecombConfig::new(Strategy::Rcb).with_suffix(1);
//! let result = decode(&model, &[], &config).unwrap();
//! assert!(result.expanded <= 30);
//! assert!(result.lattice.count_paths(10_000).unwrap().total > 1);
//! ```

pub mod lattice;
pub mod metrics;
pub mod model;
pub mod recomb;
pub mod search;
pub mod union_find;

/// Vocabulary index of a token.
pub type TokenId = u32;

pub use lattice::{Lattice, NodeId, Path};
pub use model::ScoringModel;
pub use search::{decode, SearchConfig, SearchResult};


#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/lattices.md")]
    mod lattices {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/recombination.md")]
    mod recombination {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
