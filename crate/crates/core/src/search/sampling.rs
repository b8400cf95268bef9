use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Algorithm, Run, SearchConfig, SearchError, SearchResult};
use crate::lattice::NodeId;
use crate::model::{ScoringModel, TokenDistribution};
use crate::recomb::{do_recomb_rcb, do_recomb_zip, MergeIndex, Strategy};
use crate::TokenId;

/// Renormalized sampling probabilities over the top-k entries of `dist`:
/// the softmax of `log p / tau`, then cut to the smallest prefix holding at
/// least `p` of the mass.
///
/// ```
/// use lattice_search::model::TokenDistribution;
/// use lattice_search::search::sampling_distribution;
///
/// let d = TokenDistribution::new(vec![(1, 0.6f64.ln()), (2, 0.3f64.ln()), (3, 0.1f64.ln())], 5);
/// let probs = sampling_distribution(&d, 0.8, 1.0);
/// assert_eq!(probs.len(), 2);
/// assert!((probs[0].1 - 2.0 / 3.0).abs() < 1e-12);
/// ```
pub fn sampling_distribution(dist: &TokenDistribution, p: f64, tau: f64) -> Vec<(TokenId, f64)> {
    let entries = dist.entries();
    if entries.is_empty() {
        return Vec::new();
    }
    let top = entries[0].1 / tau;
    let weights: Vec<f64> = entries.iter().map(|&(_, lp)| (lp / tau - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::new();
    let mut mass = 0.0;
    for (&(tok, _), w) in entries.iter().zip(&weights) {
        let q = w / total;
        out.push((tok, q));
        mass += q;
        if mass >= p - 1e-12 {
            break;
        }
    }
    out.iter_mut().for_each(|e| e.1 /= mass);
    out
}

/// `k` independent ancestral samples with nucleus or temperature
/// truncation. Every step of every chain is a model call, so the budget is
/// shared across chains in order.
pub fn decode_sampling<M: ScoringModel + ?Sized>(
    model: &M,
    source: &[TokenId],
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let (p, tau) = match config.algorithm {
        Algorithm::Temp => (1.0, config.tau),
        _ => (config.p, 1.0),
    };
    let mut run = Run::new(model, source, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let recomb = config.recomb;
    let mut index = MergeIndex::new(recomb.suffix_n);
    let mut indexed = HashSet::new();
    let mut finished = Vec::new();
    let max_len = config.max_len;

    'chains: for chain in 0..config.k {
        let mut cur = run.lattice.sos();
        loop {
            if run.lattice.is_terminal(cur) {
                break;
            }
            if run.is_eos(cur) || run.depth(cur) >= max_len {
                run.close(cur)?;
                if indexed.insert(cur) {
                    index.insert(&run.lattice, cur);
                }
                break;
            }
            let Some(dist) = run.expand(cur)? else {
                run.diag.incomplete += 1;
                run.lattice.mark_terminal(cur)?;
                finished.push(cur);
                log::debug!("sampling: budget ran out in chain {chain}");
                break 'chains;
            };
            if indexed.insert(cur) {
                index.insert(&run.lattice, cur);
            }
            let probs = sampling_distribution(&dist, p, tau);
            if probs.is_empty() {
                run.close(cur)?;
                break;
            }
            let pick = WeightedIndex::new(probs.iter().map(|e| e.1))
                .expect("weights are positive")
                .sample(&mut rng);
            let tok = probs[pick].0;
            let lp = dist.log_prob(tok).expect("sampled from dist");
            let (child, created) = run.child(cur, tok, lp)?;
            cur = child;
            if created && recomb.enabled() {
                if let Some(target) = index.find_target(&run.lattice, child, &recomb) {
                    let step = run.meter.spent();
                    let ev = match recomb.strategy {
                        Strategy::Zip => do_recomb_zip(&mut run.lattice, child, target, &recomb, step)?,
                        _ => do_recomb_rcb(&mut run.lattice, child, target, step)?,
                    };
                    if ev.accepted {
                        cur = run.lattice.resolve(target);
                    }
                    run.record(ev);
                }
            }
        }
        finished.push(cur);
    }

    if run.meter.exhausted() {
        run.diag.budget_exhausted = true;
    }
    let finished: Vec<NodeId> = finished
        .into_iter()
        .map(|n| run.lattice.resolve(n))
        .collect();
    run.finish(finished)
}
