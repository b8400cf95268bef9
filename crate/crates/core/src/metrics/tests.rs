use super::*;
use crate::lattice::NodeId;
use crate::model::TableModel;
use crate::search::{decode, Algorithm, SearchConfig};

fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// sos → words..., last node terminal.
fn chain(words: &[&str]) -> Lattice {
    let mut l = Lattice::new(0, "<s>");
    let mut cur = l.sos();
    for (i, w) in words.iter().enumerate() {
        cur = l.add_gen_child(cur, 2 + i as u32, *w, -1.0, false).unwrap();
    }
    l.mark_terminal(cur).unwrap();
    l
}

/// `count` consecutive two-way forks with word choices `w{i}a` / `w{i}b`,
/// rejoined by merge edges: `2^count` paths.
fn forks(count: usize) -> Lattice {
    let mut l = Lattice::new(0, "<s>");
    let mut cur = l.sos();
    for i in 0..count {
        let a = l.add_gen_child(cur, 10 + 2 * i as u32, format!("w{i}a"), -0.5, false).unwrap();
        let b = l.add_gen_child(cur, 11 + 2 * i as u32, format!("w{i}b"), -0.9, false).unwrap();
        let join = l.add_gen_child(a, 1000 + i as u32, format!("j{i}"), -0.1, false).unwrap();
        assert!(l.add_mrg_edge(b, join).unwrap());
        cur = join;
    }
    l.mark_terminal(cur).unwrap();
    l
}

fn all_words(l: &Lattice) -> Vec<Vec<String>> {
    fn walk(l: &Lattice, n: NodeId, acc: &mut Vec<NodeId>, out: &mut Vec<Vec<String>>) {
        acc.push(n);
        if l.is_terminal(n) {
            out.push(
                acc[1..]
                    .iter()
                    .map(|&id| l.node(id).unwrap())
                    .filter(|x| !x.is_eos)
                    .map(|x| x.text.clone())
                    .collect(),
            );
        }
        for &(s, _) in l.successors(n) {
            walk(l, s, acc, out);
        }
        acc.pop();
    }
    let mut out = Vec::new();
    walk(l, l.sos(), &mut Vec::new(), &mut out);
    out
}

#[test]
fn rouge_identical_and_disjoint() {
    let a = toks("the cat sat");
    assert_eq!(rouge_n(&a, &a, 1), 1.0);
    assert_eq!(rouge_n(&a, &a, 2), 1.0);
    assert_eq!(rouge_l(&a, &a), 1.0);
    let b = toks("dogs ran off");
    assert_eq!(rouge_n(&a, &b, 1), 0.0);
    assert_eq!(rouge_l(&a, &b), 0.0);
    assert_eq!(rouge_n::<&str>(&[], &a, 1), 0.0);
}

#[test]
fn rouge_golden() {
    let c = toks("a b c");
    let r = toks("a c d");
    assert!(close(rouge_n(&c, &r, 1), 2.0 / 3.0));
    assert_eq!(rouge_n(&c, &r, 2), 0.0);
    assert!(close(rouge_l(&c, &r), 2.0 / 3.0));
    // 3 of 5 candidate bigrams and 3 of 4 reference bigrams.
    let c = toks("the cat sat on the mat");
    let r = toks("the cat on the mat");
    let (p, rc) = (3.0 / 5.0, 3.0 / 4.0);
    assert!(close(rouge_n(&c, &r, 2), 2.0 * p * rc / (p + rc)));
    // LCS is the whole reference: P = 5/6, R = 1.
    assert!(close(rouge_l(&c, &r), 2.0 * (5.0 / 6.0) / (5.0 / 6.0 + 1.0)));
}

#[test]
fn bleu_golden() {
    let a = toks("the cat sat on the mat");
    assert!(close(bleu(&a, &a), 100.0));
    // Precisions 5/6, (3+1)/(5+1), (1+1)/(4+1), (0+1)/(3+1); product 1/18.
    let r = toks("the cat is on the mat");
    assert!(close(bleu(&a, &r), 100.0 * (1.0f64 / 18.0).powf(0.25)));
    // Half-length candidate: every precision is 1, penalty e^(1-2).
    assert!(close(bleu(&toks("a b"), &toks("a b c d")), 100.0 * (-1.0f64).exp()));
    assert_eq!(bleu::<&str>(&[], &a), 0.0);
    assert_eq!(bleu(&toks("x y"), &a), 0.0);
}

#[test]
fn edit_distance_golden() {
    let k: Vec<char> = "kitten".chars().collect();
    let s: Vec<char> = "sitting".chars().collect();
    assert_eq!(edit_distance(&k, &s), 3);
    assert_eq!(edit_distance(&toks("a b c"), &toks("a x c")), 1);
    assert_eq!(edit_distance::<u8>(&[], &[1, 2]), 2);
}

/// The recursive definition, memoized on suffix lengths.
fn lev_rec(a: &[u8], b: &[u8], memo: &mut [[Option<usize>; 7]; 7]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(v) = memo[a.len()][b.len()] {
        return v;
    }
    let sub = lev_rec(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
    let del = lev_rec(&a[1..], b, memo) + 1;
    let ins = lev_rec(a, &b[1..], memo) + 1;
    let v = sub.min(del).min(ins);
    memo[a.len()][b.len()] = Some(v);
    v
}

fn sequences(max_len: usize) -> Vec<Vec<u8>> {
    let mut all = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for t in 0..3u8 {
                let mut s2: Vec<u8> = s.clone();
                s2.push(t);
                next.push(s2);
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

#[test]
fn edit_distance_matches_the_recursion_exhaustively() {
    let seqs = sequences(6);
    assert_eq!(seqs.len(), 1093);
    for a in &seqs {
        for b in &seqs {
            let mut memo = [[None; 7]; 7];
            assert_eq!(edit_distance(a, b), lev_rec(a, b, &mut memo), "{a:?} {b:?}");
        }
    }
}

#[test]
fn pearson_golden() {
    let xs: Vec<f64> = (1..=10).map(f64::from).collect();
    let ys = [2.0, 4.0, 5.0, 4.0, 5.0, 7.0, 8.0, 9.0, 10.0, 12.0];
    // Sxy = 83, Sxx = 82.5, Syy = 88.4.
    assert!(close(pearson(&xs, &ys).unwrap(), 83.0 / (82.5f64 * 88.4).sqrt()));
    let lin: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
    assert!(close(pearson(&xs, &lin).unwrap(), 1.0));
    let anti: Vec<f64> = xs.iter().map(|x| -0.5 * x).collect();
    assert!(close(pearson(&xs, &anti).unwrap(), -1.0));
    assert_eq!(pearson(&xs, &[1.0; 10]), None);
}

#[test]
fn correlation_uses_gaps_to_the_best_hypothesis() {
    // Example 1: h* has score -1; gaps (1, 0.1), (2, 0.2).
    // Example 2: h* has score -0.5; gaps (1.5, 0.15), (3, 0.3).
    let ex = vec![
        vec![(-2.0, 0.4), (-1.0, 0.5), (-3.0, 0.3)],
        vec![(-0.5, 0.9), (-2.0, 0.75), (-3.5, 0.6)],
    ];
    let gaps = score_quality_gaps(&ex);
    assert_eq!(gaps.len(), 4);
    assert!(close(gaps[0].0, 1.0) && close(gaps[0].1, 0.1));
    assert!(close(score_quality_correlation(&ex).unwrap(), 1.0));
    assert_eq!(score_quality_correlation(&ex[..1]), None);
}

#[test]
fn novel_ngrams_count_nodes_and_edges() {
    let mut l2 = Lattice::new(0, "<s>");
    let a = l2.add_gen_child(l2.sos(), 2, "a", -1.0, false).unwrap();
    let b = l2.add_gen_child(a, 3, "b", -1.0, false).unwrap();
    let a2 = l2.add_gen_child(b, 2, "a", -1.0, false).unwrap();
    let e = l2.add_gen_child(a2, 1, "</s>", 0.0, true).unwrap();
    l2.mark_terminal(e).unwrap();
    assert_eq!(novel_ngrams(&l2, 1), 2);
    assert_eq!(novel_ngrams(&l2, 2), 2);
    assert_eq!(novel_ngrams(&Lattice::new(0, "<s>"), 1), 0);
    assert_eq!(novel_ngrams(&Lattice::new(0, "<s>"), 2), 0);
}

#[test]
fn merge_edges_add_bigrams_but_not_unigrams() {
    let mut l = Lattice::new(0, "<s>");
    let x = l.add_gen_child(l.sos(), 2, "x", -1.0, false).unwrap();
    let y = l.add_gen_child(l.sos(), 3, "y", -1.0, false).unwrap();
    let zx = l.add_gen_child(x, 4, "z", -1.0, false).unwrap();
    let zy = l.add_gen_child(y, 4, "z", -1.0, false).unwrap();
    l.mark_terminal(zx).unwrap();
    l.mark_terminal(zy).unwrap();
    let (n1, n2) = (novel_ngrams(&l, 1), novel_ngrams(&l, 2));
    l.add_mrg_edge(y, zx).unwrap();
    l.remove_subtree(zy, Some(zx)).unwrap();
    assert_eq!(novel_ngrams(&l, 1), n1);
    assert_eq!(novel_ngrams(&l, 2), n2);
}

#[test]
fn single_path_lattice_is_the_degenerate_row() {
    let l = chain(&["a", "b", "c"]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(self_bleu(&l, 5, &mut rng).unwrap(), 100.0);
    assert_eq!(mean_edit_distance(&l, 5, &mut rng).unwrap(), 0.0);
    let reference = ["a", "x", "c"];
    for metric in [Metric::Rouge1, Metric::Rouge2, Metric::RougeL, Metric::Bleu] {
        let o = oracle_match(&l, &reference, metric).unwrap();
        let s = sample_match(&l, &reference, metric, &mut rng).unwrap();
        assert!(!o.approximate);
        assert!(close(o.score, metric.score(&["a", "b", "c"], &reference)));
        assert!(close(o.score, s));
    }
}

#[test]
fn disjoint_samples_have_zero_self_bleu() {
    // Two branches with no shared words: every ordered pair of distinct
    // samples scores 0, identical pairs 100.
    let mut l = Lattice::new(0, "<s>");
    let a = l.add_gen_child(l.sos(), 2, "p", -1.0, false).unwrap();
    let b = l.add_gen_child(l.sos(), 3, "q", -1.0, false).unwrap();
    l.mark_terminal(a).unwrap();
    l.mark_terminal(b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rng2 = rng.clone();
    let s = self_bleu(&l, 5, &mut rng).unwrap();
    let words = sample_words(&l, 5, &mut rng2).unwrap();
    let same = (0..5)
        .flat_map(|i| (0..5).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && words[i] == words[j])
        .count();
    assert!(close(s, 100.0 * same as f64 / 20.0));
}

#[test]
fn oracle_is_the_brute_force_maximum() {
    let l = forks(3);
    let paths = all_words(&l);
    assert_eq!(paths.len(), 8);
    let reference = ["w0b", "j0", "w1a", "j1", "w2b", "j2"];
    for metric in [Metric::Rouge1, Metric::Rouge2, Metric::RougeL, Metric::Bleu] {
        let brute = paths
            .iter()
            .map(|p| metric.score(p, &reference.map(String::from)))
            .fold(f64::NEG_INFINITY, f64::max);
        let o = oracle_match(&l, &reference, metric).unwrap();
        assert!(!o.approximate);
        assert!(close(o.score, brute));
    }
    // The reference is a path, so it matches exactly.
    assert!(close(oracle_match(&l, &reference, Metric::Rouge2).unwrap().score, 1.0));
    assert!(close(oracle_match(&l, &reference, Metric::Bleu).unwrap().score, 100.0));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    assert!(sample_match(&l, &reference, Metric::Rouge2, &mut rng).unwrap() <= 1.0);
}

#[test]
fn oracle_approximates_past_the_cap() {
    let l = forks(14);
    let reference: Vec<String> = (0..14).flat_map(|i| [format!("w{i}b"), format!("j{i}")]).collect();
    let o = oracle_match(&l, &reference, Metric::Rouge1).unwrap();
    assert!(o.approximate);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = sample_match(&l, &reference, Metric::Rouge1, &mut rng).unwrap();
    assert!(o.score >= s);
    assert_eq!(o, oracle_match(&l, &reference, Metric::Rouge1).unwrap());
}

#[test]
fn sampling_metrics_are_seeded() {
    let l = forks(5);
    let reference = ["w0a", "j0"];
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (
            self_bleu(&l, 5, &mut rng).unwrap(),
            mean_edit_distance(&l, 5, &mut rng).unwrap(),
            sample_match(&l, &reference, Metric::Bleu, &mut rng).unwrap(),
        )
    };
    assert_eq!(run(4), run(4));
}

fn branching_model() -> TableModel {
    TableModel::from_words(&["a", "b", "c", "x", "y"])
        .with_row(&[], &[("a", 0.5f64.ln()), ("b", 0.3f64.ln()), ("c", 0.2f64.ln())])
        .with_row(&["a"], &[("x", 0.9f64.ln()), ("y", 0.1f64.ln())])
}

#[test]
fn beam_pruning_matches_a_hand_trace() {
    // Step 1 keeps a, b. Step 2 finishes "b </s>" (0.3) and keeps ax (0.45)
    // and ay (0.05). Step 3 finishes both; the top two are ax and b, so ay
    // was expanded for nothing: 1 of 5 expansions.
    let mut c = SearchConfig::new(Algorithm::Beam);
    c.k = 2;
    c.max_len = 6;
    let r = decode(&branching_model(), &[], &c).unwrap();
    assert_eq!(r.expanded, 5);
    assert_eq!(r.pruned, 1);
    assert!(close(pruning_ratio(&r).unwrap(), 0.2));

    let mut c = SearchConfig::new(Algorithm::Greedy);
    c.max_len = 6;
    let g = decode(&branching_model(), &[], &c).unwrap();
    assert_eq!(pruning_ratio(&g), Some(0.0));
}

#[test]
fn report_bundles_everything() {
    let mut c = SearchConfig::new(Algorithm::Bfs);
    c.max_len = 4;
    c.budget = Some(8);
    let r = decode(&branching_model(), &[], &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reference = ["a", "x"];
    let rep = DecodeReport::compute("bfs", &r, Some((&reference[..], Metric::Rouge1)), &mut rng).unwrap();
    assert_eq!(rep.path_count, r.completed());
    assert!(rep.path_count >= 3);
    assert_eq!(rep.pruned_ratio, Some(0.0));
    assert!(rep.oracle_match.unwrap() >= rep.sample_match.unwrap());
    assert!((0.0..=100.0).contains(&rep.self_bleu));
    assert_eq!(rep.oracle_match, Some(1.0));
    let back: DecodeReport = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(back, rep);

    let summary = ReportSummary::new("bfs", &[rep.clone(), rep.clone()]);
    assert_eq!(summary.examples, 2);
    assert_eq!(summary.path_count, rep.path_count as f64);
    let table = summary_table(&[summary]);
    assert_eq!(table.lines().count(), 2);
    assert!(table.starts_with("name"));
    let per = report_table(&[rep]);
    let header = per.lines().next().unwrap();
    for col in COLUMNS {
        assert!(header.contains(col));
    }
}

#[test]
fn metric_names_parse() {
    for m in [Metric::Rouge1, Metric::Rouge2, Metric::RougeL, Metric::Bleu] {
        assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
    }
    assert!("meteor".parse::<Metric>().is_err());
}
