use super::{Run, SearchConfig, SearchError, SearchResult};
use crate::model::ScoringModel;
use crate::TokenId;

/// Always extends with the most probable token. The lattice is a chain.
pub fn decode_greedy<M: ScoringModel + ?Sized>(
    model: &M,
    source: &[TokenId],
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let mut cfg = config.clone();
    cfg.budget = Some(config.budget.unwrap_or(config.max_len));
    let mut run = Run::new(model, source, &cfg);
    let mut cur = run.lattice.sos();
    loop {
        if run.is_eos(cur) || run.depth(cur) >= cfg.max_len {
            run.close(cur)?;
            break;
        }
        let Some(dist) = run.expand(cur)? else {
            run.diag.incomplete += 1;
            run.lattice.mark_terminal(cur)?;
            break;
        };
        let Some((tok, lp)) = dist.best() else {
            run.close(cur)?;
            break;
        };
        cur = run.child(cur, tok, lp)?.0;
    }
    run.finish(vec![cur])
}
