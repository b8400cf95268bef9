use std::fmt::Write as _;

use lattice_search::recomb::{validate_merges, MergeValidation};
use lattice_search::search::decode;
use rayon::prelude::*;
use serde::Serialize;

use crate::run::{create_dir, Prepared, RunView};
use crate::CliError;

/// Exact-match rates at every horizon for one suffix length, pooled over
/// all examples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergeCurve {
    pub suffix_n: usize,
    pub points: Vec<MergeValidation>,
}

fn example_counts(view: &RunView<'_>, index: usize, horizons: &[usize]) -> Result<Vec<(usize, usize)>, CliError> {
    let source = view.source(index)?;
    let result = decode(view.model.as_ref(), &source, &view.search_config(index))?;
    horizons
        .iter()
        .map(|&h| {
            let v = validate_merges(view.model.as_ref(), &source, &result.events, h)?;
            Ok((v.events, v.exact_matches))
        })
        .collect()
}

fn curve(view: &RunView<'_>, horizons: &[usize]) -> Result<MergeCurve, CliError> {
    let n = view.inputs.sources.len();
    let per_example: Vec<Result<Vec<(usize, usize)>, CliError>> = if view.spec.model.is_bridge() {
        (0..n).map(|i| example_counts(view, i, horizons)).collect()
    } else {
        (0..n).into_par_iter().map(|i| example_counts(view, i, horizons)).collect()
    };
    let mut totals = vec![(0, 0); horizons.len()];
    for counts in per_example {
        for (t, c) in totals.iter_mut().zip(counts?) {
            t.0 += c.0;
            t.1 += c.1;
        }
    }
    let points = horizons
        .iter()
        .zip(totals)
        .map(|(&horizon, (events, exact_matches))| MergeValidation {
            horizon,
            events,
            exact_matches,
            exact_match: (events > 0).then(|| exact_matches as f64 / events as f64),
        })
        .collect();
    Ok(MergeCurve {
        suffix_n: view.config.recomb.suffix_n,
        points,
    })
}

/// Decodes every example once per suffix length in `suffix_ns` (the run's
/// own when empty) and measures how often merged prefixes share their
/// greedy future over each horizon. Writes `merges-<hash>.json`.
pub fn run_validate_merges(
    prepared: &Prepared,
    horizons: &[usize],
    suffix_ns: &[usize],
) -> Result<Vec<MergeCurve>, CliError> {
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(CliError::Config("horizons must be positive".into()));
    }
    let own = [prepared.spec.config.recomb.suffix_n];
    let ns = if suffix_ns.is_empty() { &own[..] } else { suffix_ns };
    let mut curves = Vec::new();
    for &n in ns {
        let mut spec = prepared.spec.clone();
        spec.config.recomb.suffix_n = n;
        curves.push(curve(&prepared.with_spec(&spec)?, horizons)?);
    }
    let out = &prepared.spec.out;
    create_dir(out)?;
    let path = out.join(format!("merges-{}.json", prepared.spec.config_hash()));
    let json = serde_json::to_string_pretty(&curves).expect("curves always serialize");
    std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    Ok(curves)
}

/// One row per suffix length, one EM column per horizon.
pub fn curve_table(curves: &[MergeCurve]) -> String {
    let mut out = String::new();
    let Some(first) = curves.first() else { return out };
    let _ = write!(out, "{:>3}  {:>6}", "n", "merges");
    for p in &first.points {
        let _ = write!(out, "  {:>6}", format!("L={}", p.horizon));
    }
    out.push('\n');
    for c in curves {
        let events = c.points.first().map_or(0, |p| p.events);
        let _ = write!(out, "{:>3}  {:>6}", c.suffix_n, events);
        for p in &c.points {
            let cell = p.exact_match.map_or_else(|| "-".into(), |em| format!("{em:.3}"));
            let _ = write!(out, "  {cell:>6}");
        }
        out.push('\n');
    }
    out
}
