use super::*;
use crate::model::{MarkovModel, TableModel};
use crate::recomb::{RecombConfig, Strategy};
use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

const CORPUS: &str = "the cat sat on the mat\n\
                      the dog sat on the rug\n\
                      a cat lay on the mat\n\
                      the cat sat on a rug\n\
                      a dog ran to the cat";

fn markov() -> MarkovModel {
    MarkovModel::from_text(CORPUS, 1, 0.1).unwrap()
}

fn config(algorithm: Algorithm) -> SearchConfig {
    let mut c = SearchConfig::new(algorithm);
    c.max_len = 8;
    c.strict = true;
    c
}

fn words(r: &SearchResult, node: NodeId) -> Vec<String> {
    let path = r.lattice.canonical_path(node).unwrap();
    path.words(&r.lattice).into_iter().map(String::from).collect()
}

fn ab_model() -> TableModel {
    TableModel::from_words(&["a", "b", "c"])
        .with_row(&[], &[("a", -0.1), ("b", -2.4)])
        .with_row(&["a"], &[("b", -0.2), ("c", -1.7)])
        .with_row(&["a", "b"], &[("</s>", 0.0)])
}

#[test]
fn greedy_pays_one_call_per_generated_token() {
    let r = decode(&ab_model(), &[], &config(Algorithm::Greedy)).unwrap();
    assert_eq!(r.expanded, 3);
    assert_eq!(r.finished.len(), 1);
    assert_eq!(words(&r, r.finished[0]), ["a", "b"]);
    assert!(r.lattice.node(r.finished[0]).unwrap().is_eos);
    assert_eq!(r.completed(), 1);
    assert_eq!(r.pruned, 0);
}

#[test]
fn greedy_truncates_at_max_len() {
    let model = TableModel::uniform(&["x", "y"]).with_row(&[], &[("x", -0.1)]);
    let mut c = config(Algorithm::Greedy);
    c.max_len = 1;
    let r = decode(&model, &[], &c).unwrap();
    assert_eq!(r.expanded, 1);
    assert_eq!(r.diagnostics.truncated, 1);
    assert_eq!(r.completed(), 1);
}

#[test]
fn beam_of_one_is_greedy() {
    let model = markov();
    let g = decode(&model, &[], &config(Algorithm::Greedy)).unwrap();
    let mut c = config(Algorithm::Beam);
    c.k = 1;
    let b = decode(&model, &[], &c).unwrap();
    assert_eq!(words(&g, g.finished[0]), words(&b, b.finished[0]));
    assert_eq!(g.expanded, b.expanded);
}

#[test]
fn beam_finds_what_greedy_misses() {
    // Greedy commits to "a" (p = 0.67) and then only bad continuations
    // remain; "b </s>" is better overall.
    let model = TableModel::from_words(&["a", "b", "c", "d"])
        .with_row(&[], &[("a", 0.67f64.ln()), ("b", 0.33f64.ln())])
        .with_row(&["a"], &[("c", 0.25f64.ln()), ("d", 0.25f64.ln()), ("</s>", 0.5f64.ln())])
        .with_row(&["a", "c"], &[("</s>", 0.0)])
        .with_row(&["a", "d"], &[("</s>", 0.0)])
        .with_row(&["b"], &[("</s>", 0.0)]);
    let g = decode(&model, &[], &config(Algorithm::Greedy)).unwrap();
    assert_eq!(words(&g, g.finished[0]), ["a"]);
    let mut c = config(Algorithm::Beam);
    c.k = 2;
    let b = decode(&model, &[], &c).unwrap();
    assert_eq!(words(&b, b.finished[0]), ["a"]);
    // 0.67 * 0.5 = 0.335 > 0.33: still "a", but both survive.
    assert_eq!(b.finished.len(), 2);
    assert_eq!(words(&b, b.finished[1]), ["b"]);

    let model = model.with_row(&["a"], &[("c", 0.4f64.ln()), ("d", 0.4f64.ln()), ("</s>", 0.2f64.ln())]);
    let g = decode(&model, &[], &config(Algorithm::Greedy)).unwrap();
    assert_eq!(words(&g, g.finished[0]), ["a", "c"]);
    let b = decode(&model, &[], &c).unwrap();
    assert_eq!(words(&b, b.finished[0]), ["b"]);
}

#[test]
fn beam_returns_k_hypotheses_and_prunes() {
    let model = markov();
    let mut c = config(Algorithm::Beam);
    c.k = 4;
    let r = decode(&model, &[], &c).unwrap();
    assert_eq!(r.finished.len(), 4);
    assert_eq!(r.completed(), 4);
    assert!(r.pruned > 0);
    assert_eq!(r.lattice.terminals().len(), 4);
}

#[test]
fn single_group_dbs_is_beam() {
    let model = markov();
    let mut c = config(Algorithm::Beam);
    c.k = 3;
    let b = decode(&model, &[], &c).unwrap();
    c.algorithm = Algorithm::Dbs;
    c.groups = Some(1);
    let d = decode(&model, &[], &c).unwrap();
    let bw: Vec<_> = b.finished.iter().map(|&n| words(&b, n)).collect();
    let dw: Vec<_> = d.finished.iter().map(|&n| words(&d, n)).collect();
    assert_eq!(bw, dw);
    assert_eq!(b.expanded, d.expanded);
}

#[test]
fn unpenalized_groups_collapse_onto_one_beam() {
    let model = markov();
    let mut c = config(Algorithm::Beam);
    c.k = 2;
    let b = decode(&model, &[], &c).unwrap();
    c.algorithm = Algorithm::Dbs;
    c.k = 4;
    c.groups = Some(2);
    c.diversity_strength = 0.0;
    let d = decode(&model, &[], &c).unwrap();
    let bw: Vec<_> = b.finished.iter().map(|&n| words(&b, n)).collect();
    let dw: Vec<_> = d.finished.iter().map(|&n| words(&d, n)).collect();
    assert_eq!(bw, dw);
    // Shared nodes are only scored once.
    assert_eq!(b.expanded, d.expanded);
}

#[test]
fn penalty_pushes_groups_apart() {
    let model = markov();
    let mut c = config(Algorithm::Dbs);
    c.k = 2;
    c.groups = Some(2);
    c.diversity_strength = 50.0;
    let d = decode(&model, &[], &c).unwrap();
    assert_eq!(d.finished.len(), 2);
    let first: Vec<String> = d.finished.iter().map(|&n| words(&d, n)[0].clone()).collect();
    assert_ne!(first[0], first[1]);
}

#[test]
fn dbs_rejects_uneven_groups() {
    let mut c = config(Algorithm::Dbs);
    c.k = 5;
    c.groups = Some(2);
    assert!(matches!(decode(&markov(), &[], &c), Err(SearchError::Config(_))));
}

#[test]
fn tiny_nucleus_samples_the_greedy_path() {
    let model = markov();
    let g = decode(&model, &[], &config(Algorithm::Greedy)).unwrap();
    let mut c = config(Algorithm::Nucleus);
    c.p = 1e-9;
    c.k = 3;
    let s = decode(&model, &[], &c).unwrap();
    assert_eq!(s.finished.len(), 3);
    for &n in &s.finished {
        assert_eq!(words(&s, n), words(&g, g.finished[0]));
    }
    // Every chain pays for its own steps.
    assert_eq!(s.expanded, 3 * g.expanded);
    assert_eq!(s.completed(), 1);
}

#[test]
fn temperature_flattens_the_distribution() {
    let d = TokenDistribution::new(vec![(2, 0.7f64.ln()), (3, 0.2f64.ln()), (4, 0.1f64.ln())], 5);
    let cold = sampling_distribution(&d, 1.0, 1.0);
    let hot = sampling_distribution(&d, 1.0, 1.5);
    assert!((cold[0].1 - 0.7).abs() < 1e-12);
    let z: f64 = [0.7f64, 0.2, 0.1].iter().map(|p| p.powf(1.0 / 1.5)).sum();
    assert!((hot[0].1 - 0.7f64.powf(1.0 / 1.5) / z).abs() < 1e-12);
    assert!(hot[0].1 < cold[0].1 && hot[2].1 > cold[2].1);
    assert!((hot.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn nucleus_keeps_the_smallest_covering_prefix() {
    let d = TokenDistribution::new(vec![(2, 0.5f64.ln()), (3, 0.3f64.ln()), (4, 0.2f64.ln())], 5);
    assert_eq!(sampling_distribution(&d, 0.5, 1.0).len(), 1);
    assert_eq!(sampling_distribution(&d, 0.8, 1.0).len(), 2);
    assert_eq!(sampling_distribution(&d, 0.81, 1.0).len(), 3);
    assert!(sampling_distribution(&TokenDistribution::new(vec![], 5), 0.9, 1.0).is_empty());
}

#[test]
fn sampling_is_seeded() {
    let model = markov();
    let mut c = config(Algorithm::Temp);
    c.k = 6;
    c.seed = 11;
    let a = decode(&model, &[], &c).unwrap();
    let b = decode(&model, &[], &c).unwrap();
    let aw: Vec<_> = a.finished.iter().map(|&n| words(&a, n)).collect();
    let bw: Vec<_> = b.finished.iter().map(|&n| words(&b, n)).collect();
    assert_eq!(aw, bw);
    assert_eq!(a.expanded, b.expanded);
}

#[test]
fn bfs_starts_with_the_greedy_chain() {
    let model = markov();
    let g = decode(&model, &[], &config(Algorithm::Greedy)).unwrap();
    let mut c = config(Algorithm::Bfs);
    c.budget = Some(40);
    let r = decode(&model, &[], &c).unwrap();
    let chain: Vec<Vec<TokenId>> = g
        .expanded_ids
        .iter()
        .map(|&n| g.lattice.canonical_tokens(n).unwrap())
        .collect();
    let head: Vec<Vec<TokenId>> = r.expanded_ids[..chain.len()]
        .iter()
        .map(|&n| r.lattice.canonical_tokens(n).unwrap())
        .collect();
    assert_eq!(chain, head);
    assert_eq!(r.pruned, 0);
    assert!(r.completed() > 1);
}

#[test]
fn bfs_spends_exactly_its_budget() {
    let model = markov();
    let mut c = config(Algorithm::Bfs);
    c.budget = Some(10);
    let r = decode(&model, &[], &c).unwrap();
    assert_eq!(r.expanded, 10);
    assert_eq!(r.pruned, 0);
    assert!(r.diagnostics.budget_exhausted);
}

#[test]
fn bfs_with_recombination_spends_the_same() {
    let model = markov();
    let mut c = config(Algorithm::Bfs);
    c.budget = Some(40);
    let plain = decode(&model, &[], &c).unwrap();
    c.recomb = RecombConfig::new(Strategy::Rcb).with_suffix(1);
    let rcb = decode(&model, &[], &c).unwrap();
    assert!(rcb.diagnostics.merges_accepted > 0);
    assert_eq!(rcb.pruned, 0);
    assert!(rcb.expanded <= 40 && plain.expanded <= 40);
    assert!(rcb.completed() >= plain.completed());
    c.recomb = RecombConfig::new(Strategy::Zip).with_suffix(2);
    let zip = decode(&model, &[], &c).unwrap();
    assert_eq!(zip.pruned, 0);
    assert!(zip.completed() >= 1);
}

#[test]
fn recombination_is_checked_against_the_algorithm() {
    let mut c = config(Algorithm::Greedy);
    c.recomb = RecombConfig::new(Strategy::Rcb);
    assert!(c.validate().is_err());
    c.algorithm = Algorithm::Bfs;
    c.recomb = RecombConfig::new(Strategy::Zbeam);
    assert!(c.validate().is_err());
    c.algorithm = Algorithm::Beam;
    assert!(c.validate().is_ok());
}

#[test]
fn beam_recombination_runs() {
    let model = markov();
    for strategy in [Strategy::Zbeam, Strategy::Rcb] {
        let mut c = config(Algorithm::Beam);
        c.k = 4;
        c.recomb = RecombConfig::new(strategy).with_suffix(1);
        let r = decode(&model, &[], &c).unwrap();
        assert!(!r.finished.is_empty());
        assert!(r.completed() >= r.finished.len() as u64);
    }
}

#[test]
fn sampling_recombination_merges_chains() {
    let model = markov();
    for strategy in [Strategy::Rcb, Strategy::Zip] {
        let mut c = config(Algorithm::Nucleus);
        c.k = 10;
        c.recomb = RecombConfig::new(strategy).with_suffix(1);
        let r = decode(&model, &[], &c).unwrap();
        assert!(r.diagnostics.merges_accepted > 0, "{strategy}");
        assert_eq!(r.finished.len(), 10);
        assert!(r.completed() >= 1);
    }
}

#[test]
fn effective_budget_matches_the_correction_factors() {
    let t = effective_budget(TaskProfile::Translation, 8, 10);
    assert_eq!((t.corrected_k, t.budget, t.corrected_budget), (12, 80, 120));
    assert_eq!(effective_budget(TaskProfile::Summarization, 16, 1).corrected_k, 20);
    assert_eq!(effective_budget(TaskProfile::Custom(2.0), 3, 1).corrected_k, 6);
    assert_eq!(effective_budget(TaskProfile::Custom(0.01), 3, 1).corrected_k, 1);
}

#[test]
fn algorithm_names_round_trip() {
    for a in Algorithm::ALL {
        assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
    }
    assert!("astar".parse::<Algorithm>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bfs_always_completes(budget in 1usize..60, max_len in 1usize..10, lambda in -1.0f64..1.0) {
        let model = markov();
        let mut c = config(Algorithm::Bfs);
        c.budget = Some(budget);
        c.max_len = max_len;
        c.lambda = lambda;
        let r = decode(&model, &[], &c).unwrap();
        prop_assert!(r.expanded <= budget);
        prop_assert_eq!(r.pruned, 0);
        prop_assert!(r.completed() >= 1);
        prop_assert!(r.diagnostics.incomplete <= 1);
    }
}
