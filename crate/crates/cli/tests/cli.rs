use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lattice_cli::{run_decode, run_sweep, run_validate_merges, Axis, ModelSpec, Prepared, RunSpec, SweepSpec};
use lattice_search::metrics::DecodeReport;
use lattice_search::recomb::Strategy;
use lattice_search::search::{Algorithm, SearchConfig, TaskProfile};
use tempfile::TempDir;

const CORPUS: &str = "\
the cat sat on the mat
the dog sat on the rug
a cat ran on the mat
the big dog ran on a red rug
a dog sat on the big mat
the red cat sat on a rug
";

const REFS: &str = "\
the cat sat on the mat
the dog ran on the rug
a red cat sat on a mat
";

const TABLE: &str = r#"{
  "vocab": ["a", "b", "c", "d"],
  "rows": [
    {"prefix": [], "next": [["a", -0.4], ["b", -1.3], ["c", -2.0]]},
    {"prefix": ["a"], "next": [["b", -0.7], ["c", -0.9], ["</s>", -2.2]]},
    {"prefix": ["b"], "next": [["a", -0.5], ["d", -1.1], ["</s>", -2.6]]},
    {"prefix": ["a", "b"], "next": [["c", -0.3], ["</s>", -1.5]]},
    {"prefix": ["a", "c"], "next": [["d", -0.6], ["b", -0.9]]}
  ],
  "default": [["d", -0.8], ["c", -1.2], ["</s>", -1.4], ["a", -2.5]]
}"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(lines: usize) -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("corpus.txt"), CORPUS).unwrap();
        fs::write(dir.path().join("table.json"), TABLE).unwrap();
        fs::write(dir.path().join("input.txt"), "\n".repeat(lines)).unwrap();
        fs::write(dir.path().join("refs.txt"), REFS).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn spec(&self, algorithm: Algorithm, out: &str) -> RunSpec {
        let mut config = SearchConfig::new(algorithm);
        config.k = 4;
        config.max_len = 10;
        RunSpec {
            model: ModelSpec::Markov {
                corpus: self.path("corpus.txt"),
                order: 2,
                smoothing: 0.0,
            },
            input: self.path("input.txt"),
            refs: Some(self.path("refs.txt")),
            config,
            profile: None,
            metric: None,
            out: self.path(out),
        }
    }

    fn table_spec(&self, algorithm: Algorithm, out: &str) -> RunSpec {
        let mut spec = self.spec(algorithm, out);
        spec.model = ModelSpec::Table {
            path: self.path("table.json"),
        };
        spec.refs = None;
        spec
    }

    fn lattice(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_lattice"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn report(dir: &Path, index: usize) -> DecodeReport {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{index:05}.report.json"))).unwrap()).unwrap()
}

#[test]
fn decode_writes_one_lattice_and_report_per_line() {
    let f = Fixture::new(3);
    let out = f.lattice(&["decode", "--model", "table.json", "-i", "input.txt", "--algo", "greedy", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> = files(&f.path("o")).into_keys().collect();
    let count = |suffix: &str| names.iter().filter(|n| n.ends_with(suffix)).count();
    assert_eq!(count(".lattice.json"), 3);
    assert_eq!(count(".lattice.dot"), 3);
    assert_eq!(count(".report.json"), 3);
    assert_eq!(names.iter().filter(|n| n.starts_with("summary-")).count(), 1);
    assert!(names.contains(&"00002.lattice.json".to_string()));
    let stdout = String::from_utf8(out.stdout).unwrap();
    // Three per-example rows, then one aggregate table.
    assert_eq!(stdout.matches("00000").count(), 1);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("name")).count(), 2);
    assert!(stdout.lines().any(|l| l.starts_with("greedy ")));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let f = Fixture::new(3);
    for algo in ["bfs", "nucleus", "dbs"] {
        let mut dirs = Vec::new();
        for _ in 0..2 {
            let res = f.lattice(&[
                "decode", "--corpus", "corpus.txt", "-i", "input.txt", "--refs", "refs.txt", "--algo", algo,
                "--recomb", "rcb", "--suffix-n", "2", "-k", "4", "--max-len", "10", "--seed", "9", "--out", algo,
            ]);
            assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
            dirs.push(files(&f.path(algo)));
        }
        for (name, bytes) in &dirs[0] {
            assert!(dirs[1][name] == *bytes, "{algo}: {name} differs");
        }
        assert_eq!(dirs[0].len(), dirs[1].len());
        assert!(dirs[0].len() >= 10);
    }
}

#[test]
fn missing_reference_file_fails_before_decoding() {
    let f = Fixture::new(3);
    let out = f.lattice(&["decode", "--corpus", "corpus.txt", "-i", "input.txt", "--refs", "missing.txt", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reference file"));
    assert!(!f.path("o").exists());
}

#[test]
fn misaligned_references_are_rejected() {
    let f = Fixture::new(2);
    let err = Prepared::new(&f.spec(Algorithm::Bfs, "o")).err().unwrap();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("3 lines but the input has 2"), "{err}");
}

#[test]
fn bad_model_flags_are_configuration_errors() {
    let f = Fixture::new(1);
    let none = f.lattice(&["decode", "-i", "input.txt"]);
    assert_eq!(none.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&none.stderr).contains("no model given"));
    let both = f.lattice(&["decode", "--model", "table.json", "--corpus", "corpus.txt", "-i", "input.txt"]);
    assert_eq!(both.status.code(), Some(2));
    let custom = f.lattice(&["decode", "--model", "table.json", "-i", "input.txt", "--profile", "custom"]);
    assert_eq!(custom.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&custom.stderr).contains("--multiplier"));
    let bad_table = f.lattice(&["decode", "--model", "corpus.txt", "-i", "input.txt"]);
    assert_ne!(bad_table.status.code(), Some(0));
}

#[test]
fn k_sweep_expands_more_with_larger_beams() {
    let f = Fixture::new(3);
    let sweep = SweepSpec {
        base: f.spec(Algorithm::Beam, "sweep"),
        axis: Axis::K,
        values: vec!["2".into(), "4".into(), "8".into()],
    };
    let outcome = run_sweep(&sweep).unwrap();
    assert_eq!(outcome.aggregates.len(), 3);
    assert_eq!(outcome.rows.len(), 9);
    let expanded: Vec<f64> = outcome.aggregates.iter().map(|a| a.expanded).collect();
    assert!(expanded.windows(2).all(|w| w[0] <= w[1]), "{expanded:?}");
    let csv = fs::read_to_string(f.path("sweep/sweep-aggregate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("axis,value,config_hash,examples,failed,path_count,"));
    assert_eq!(fs::read_to_string(f.path("sweep/sweep.csv")).unwrap().lines().count(), 10);
}

#[test]
fn single_point_sweep_matches_decode() {
    let f = Fixture::new(3);
    let spec = f.spec(Algorithm::Bfs, "decode");
    let decoded = run_decode(&spec).unwrap();
    let mut base = spec.clone();
    base.out = f.path("sweep");
    let sweep = SweepSpec {
        base,
        axis: Axis::K,
        values: vec![spec.config.k.to_string()],
    };
    let outcome = run_sweep(&sweep).unwrap();
    assert_eq!(outcome.aggregates[0].config_hash, decoded.config_hash);
    let swept = f.path("sweep").join(&decoded.config_hash);
    for i in 0..3 {
        assert_eq!(report(&swept, i), decoded.reports[i]);
        let name = format!("{i:05}.lattice.json");
        assert_eq!(fs::read(swept.join(&name)).unwrap(), fs::read(f.path("decode").join(&name)).unwrap());
    }
    assert_eq!(outcome.summaries[0].path_count, decoded.summary.path_count);
}

#[test]
fn pruning_column_is_filled_for_beams_and_zero_for_bfs() {
    let f = Fixture::new(3);
    let sweep = SweepSpec {
        base: f.spec(Algorithm::Beam, "sweep"),
        axis: Axis::Algo,
        values: vec!["beam".into(), "dbs".into(), "bfs".into()],
    };
    let outcome = run_sweep(&sweep).unwrap();
    assert_eq!(outcome.failures(), 0);
    for row in &outcome.rows {
        let ratio = row.pruned_ratio.expect("pruning ratio is reported");
        match row.value.as_str() {
            "bfs" => assert_eq!(ratio, 0.0),
            _ => assert!((0.0..=1.0).contains(&ratio)),
        }
    }
    let beam_mean = outcome.aggregates[0].pruned_ratio.unwrap();
    assert!(beam_mean > 0.0, "beam pruned nothing on the corpus model");
}

#[test]
fn failing_sweep_points_are_recorded() {
    let f = Fixture::new(3);
    let mut base = f.spec(Algorithm::Dbs, "sweep");
    base.config.groups = Some(2);
    let sweep = SweepSpec {
        base,
        axis: Axis::K,
        values: vec!["4".into(), "5".into(), "6".into()],
    };
    let outcome = run_sweep(&sweep).unwrap();
    assert_eq!(outcome.failures(), 3);
    assert_eq!(outcome.aggregates[1].failed, 3);
    assert_eq!(outcome.aggregates[2].failed, 0);
    assert!(outcome.rows[3].status.contains("not divisible"));
}

#[test]
fn order_two_merges_on_two_token_suffixes_are_exact() {
    let f = Fixture::new(3);
    let mut spec = f.spec(Algorithm::Bfs, "merges");
    spec.config.recomb.strategy = Strategy::Rcb;
    spec.config.recomb.suffix_n = 2;
    let prepared = Prepared::new(&spec).unwrap();
    let horizons: Vec<usize> = (1..=10).collect();
    let curves = run_validate_merges(&prepared, &horizons, &[]).unwrap();
    assert_eq!(curves.len(), 1);
    assert!(curves[0].points[0].events > 0);
    for p in &curves[0].points {
        assert_eq!(p.exact_match, Some(1.0), "L = {}", p.horizon);
    }
    assert!(f.path("merges").join(format!("merges-{}.json", spec.config_hash())).exists());
}

#[test]
fn validate_merges_without_recombination_reports_nothing() {
    let f = Fixture::new(3);
    let out = f.lattice(&["validate-merges", "--corpus", "corpus.txt", "-i", "input.txt", "--horizons", "1,4", "--out", "m"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let row = stdout.lines().nth(1).unwrap();
    assert_eq!(row.split_whitespace().collect::<Vec<_>>(), ["4", "0", "-", "-"]);
}

#[test]
fn suffix_sweep_gives_one_curve_per_length() {
    let f = Fixture::new(3);
    let out = f.lattice(&[
        "validate-merges", "--corpus", "corpus.txt", "-i", "input.txt", "--recomb", "rcb", "--suffix-values", "2,4,6",
        "-k", "4", "--max-len", "10", "--out", "m",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let ns: Vec<&str> = stdout.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(ns, ["2", "4", "6"]);
    assert!(stdout.lines().next().unwrap().ends_with("L=10"));
}

#[test]
fn adding_examples_leaves_earlier_ones_alone() {
    let short = Fixture::new(2);
    let long = Fixture::new(3);
    for algo in [Algorithm::Nucleus, Algorithm::Temp, Algorithm::Bfs] {
        let mut a = short.spec(algo, "o");
        a.refs = None;
        let mut b = long.spec(algo, "o");
        b.refs = None;
        run_decode(&a).unwrap();
        run_decode(&b).unwrap();
        for i in 0..2 {
            let name = format!("{i:05}.lattice.json");
            assert_eq!(
                fs::read(short.path("o").join(&name)).unwrap(),
                fs::read(long.path("o").join(&name)).unwrap(),
                "{algo} example {i}"
            );
        }
    }
}

#[test]
fn examples_draw_from_their_own_streams() {
    let f = Fixture::new(3);
    let mut spec = f.spec(Algorithm::Nucleus, "o");
    spec.refs = None;
    spec.config.p = 1.0;
    run_decode(&spec).unwrap();
    let lattices: Vec<Vec<u8>> = (0..3).map(|i| fs::read(f.path(&format!("o/{i:05}.lattice.json"))).unwrap()).collect();
    // Identical empty sources still sample different lattices.
    assert!(lattices[0] != lattices[1] || lattices[1] != lattices[2]);
}

#[test]
fn profiles_correct_only_the_baselines() {
    let f = Fixture::new(1);
    let mut spec = f.spec(Algorithm::Beam, "o");
    spec.config.k = 8;
    spec.profile = Some(TaskProfile::Translation);
    assert_eq!(spec.effective_config().k, 12);
    assert_eq!(spec.metric().to_string(), "bleu");
    spec.config.k = 16;
    spec.profile = Some(TaskProfile::Summarization);
    assert_eq!(spec.effective_config().k, 20);
    assert_eq!(spec.metric().to_string(), "rouge2");
    spec.config.algorithm = Algorithm::Bfs;
    assert_eq!(spec.effective_config().k, 16);
    spec.config.algorithm = Algorithm::Beam;
    spec.profile = Some(TaskProfile::Custom(1.0));
    assert_eq!(spec.effective_config().k, 16);

    let out = f.lattice(&[
        "decode", "--corpus", "corpus.txt", "-i", "input.txt", "--algo", "beam", "-k", "8", "--profile",
        "translation", "--max-len", "6", "--out", "p",
    ]);
    assert!(out.status.success());
    let summary = files(&f.path("p")).into_iter().find(|(n, _)| n.starts_with("summary-")).unwrap().1;
    let json: serde_json::Value = serde_json::from_slice(&summary).unwrap();
    assert_eq!(json["effective_config"]["k"], 12);
    assert_eq!(json["spec"]["config"]["k"], 8);
    assert_eq!(json["summary"]["metric"], serde_json::Value::Null);
}

#[test]
fn config_hash_names_the_summary() {
    let f = Fixture::new(3);
    let a = f.spec(Algorithm::Bfs, "o");
    let mut b = a.clone();
    b.config.k = 5;
    let mut c = a.clone();
    c.out = f.path("elsewhere");
    assert_ne!(a.config_hash(), b.config_hash());
    assert_eq!(a.config_hash(), c.config_hash());
    let outcome = run_decode(&a).unwrap();
    assert!(f.path("o").join(format!("summary-{}.json", outcome.config_hash)).exists());
}

#[test]
fn log_level_comes_from_the_environment() {
    let f = Fixture::new(1);
    let run = |level: &str| {
        Command::new(env!("CARGO_BIN_EXE_lattice"))
            .current_dir(f.dir.path())
            .env("LATTICE_LOG", level)
            .args(["decode", "--corpus", "corpus.txt", "-i", "input.txt", "--out", "o"])
            .output()
            .unwrap()
    };
    let quiet = run("error");
    let loud = run("debug");
    assert!(quiet.stderr.is_empty());
    assert!(String::from_utf8_lossy(&loud.stderr).contains("example 0"));
}

// A bridge re-serving the table model must reproduce in-process decoding
// byte for byte.
fn check_bridge_equivalence(f: &Fixture, command: &str) {
    let mut runs = 0;
    for seed in 0..20u64 {
        let algorithm = Algorithm::ALL[seed as usize % Algorithm::ALL.len()];
        let recomb = match algorithm {
            Algorithm::Greedy => Strategy::None,
            Algorithm::Beam | Algorithm::Dbs if seed % 2 == 0 => Strategy::Zbeam,
            _ if seed % 3 == 0 => Strategy::None,
            _ => Strategy::Rcb,
        };
        let mut local = f.table_spec(algorithm, &format!("local-{seed}"));
        local.config.seed = seed;
        local.config.k = 2 + seed as usize % 3;
        local.config.max_len = 4 + seed as usize % 5;
        local.config.top_k = 2 + seed as usize % 3;
        local.config.recomb.strategy = recomb;
        local.config.recomb.suffix_n = 1;
        if algorithm == Algorithm::Dbs {
            local.config.groups = Some(1);
        }
        let mut remote = local.clone();
        remote.model = ModelSpec::Bridge {
            command: command.to_owned(),
            timeout_secs: 60,
        };
        remote.out = f.path(&format!("remote-{seed}"));
        let a = run_decode(&local).unwrap();
        let b = run_decode(&remote).unwrap();
        assert_eq!(a.reports, b.reports, "seed {seed}");
        for i in 0..2 {
            let name = format!("{i:05}.lattice.json");
            assert_eq!(
                fs::read(local.out.join(&name)).unwrap(),
                fs::read(remote.out.join(&name)).unwrap(),
                "seed {seed}, {algorithm}"
            );
        }
        runs += 1;
    }
    assert_eq!(runs, 20);
}

#[test]
fn bridge_stub_matches_in_process_decoding() {
    let f = Fixture::new(2);
    let bin = env!("CARGO_BIN_EXE_lattice");
    check_bridge_equivalence(&f, &format!("'{bin}' serve --model '{}'", f.path("table.json").display()));
}

#[test]
fn python_bridge_matches_in_process_decoding() {
    let python = Command::new("python3").arg("--version").output();
    if !python.is_ok_and(|o| o.status.success()) {
        eprintln!("python3 not found; skipping the python bridge check");
        return;
    }
    let f = Fixture::new(2);
    let bridge = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../bridge");
    let command = format!(
        "PYTHONPATH='{}' exec python3 -m lattice_bridge --table '{}'",
        bridge.display(),
        f.path("table.json").display()
    );
    check_bridge_equivalence(&f, &command);
}
