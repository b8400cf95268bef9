use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lattice_cli::{
    curve_table, run_decode, run_sweep, run_validate_merges, Axis, CliError, ModelSpec, Prepared, RunSpec, SweepSpec,
};
use lattice_search::metrics::{report_table, summary_table, Metric};
use lattice_search::recomb::{RecombConfig, Strategy};
use lattice_search::search::{Algorithm, SearchConfig, TaskProfile};

#[derive(Parser)]
#[command(name = "lattice", version, about = "Lattice decoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode every input line and write lattices and reports.
    Decode(RunArgs),
    /// Repeat a decode run over several values of one flag.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Flag to vary, named without dashes (k, budget, suffix-n, algo, ...).
        #[arg(long)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Measure how often merged hypotheses share their greedy continuation.
    ValidateMerges {
        #[command(flatten)]
        run: RunArgs,
        /// Continuation lengths L.
        #[arg(long = "horizons", value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        horizons: Vec<usize>,
        /// One curve per suffix length; defaults to --suffix-n.
        #[arg(long = "suffix-values", value_delimiter = ',')]
        suffix_values: Vec<usize>,
    },
    /// Serve a built-in model over the bridge protocol on stdin/stdout.
    Serve(ModelArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// JSON table model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Corpus for an n-gram model, one sequence per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Additive smoothing of the n-gram model.
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
    /// Shell command of an external model bridge.
    #[arg(long = "bridge-cmd")]
    bridge_cmd: Option<String>,
    #[arg(long = "bridge-timeout", default_value_t = 120)]
    bridge_timeout: u64,
}

impl ModelArgs {
    fn spec(self) -> Result<ModelSpec, CliError> {
        ModelSpec::from_flags(
            self.model,
            self.corpus,
            self.order,
            self.smoothing,
            self.bridge_cmd,
            self.bridge_timeout,
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Translation,
    Summarization,
    Custom,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Source file, one example per line.
    #[arg(long, short = 'i')]
    input: PathBuf,
    /// Reference file aligned with the input.
    #[arg(long)]
    refs: Option<PathBuf>,
    #[arg(long, default_value = "bfs")]
    algo: Algorithm,
    #[arg(long, default_value = "none")]
    recomb: Strategy,
    #[arg(short = 'k')]
    k: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long = "top-k")]
    top_k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(short = 'p')]
    p: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long = "div-strength")]
    div_strength: Option<f64>,
    #[arg(long = "max-len")]
    max_len: Option<usize>,
    #[arg(long = "suffix-n")]
    suffix_n: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Beam-size multiplier of the custom profile.
    #[arg(long)]
    multiplier: Option<f64>,
    /// rouge1, rouge2, rougeL or bleu; follows the profile when unset.
    #[arg(long)]
    metric: Option<Metric>,
    /// Re-verify lattice invariants after every mutation.
    #[arg(long)]
    strict: bool,
}

impl RunArgs {
    fn spec(self) -> Result<RunSpec, CliError> {
        let mut c = SearchConfig::new(self.algo);
        c.k = self.k.unwrap_or(c.k);
        c.budget = self.budget;
        c.top_k = self.top_k.unwrap_or(c.top_k);
        c.lambda = self.lambda.unwrap_or(c.lambda);
        c.p = self.p.unwrap_or(c.p);
        c.tau = self.tau.unwrap_or(c.tau);
        c.groups = self.groups;
        c.diversity_strength = self.div_strength.unwrap_or(c.diversity_strength);
        c.max_len = self.max_len.unwrap_or(c.max_len);
        c.seed = self.seed;
        c.strict = self.strict;
        let mut recomb = RecombConfig::new(self.recomb);
        recomb.suffix_n = self.suffix_n.unwrap_or(recomb.suffix_n);
        recomb.alpha = self.alpha.unwrap_or(recomb.alpha);
        c.recomb = recomb;
        let profile = match (self.profile, self.multiplier) {
            (None, None) => None,
            (Some(Profile::Translation), None) => Some(TaskProfile::Translation),
            (Some(Profile::Summarization), None) => Some(TaskProfile::Summarization),
            (Some(Profile::Custom), Some(m)) if m > 0.0 && m.is_finite() => Some(TaskProfile::Custom(m)),
            (Some(Profile::Custom), Some(m)) => {
                return Err(CliError::Config(format!("multiplier {m} must be positive")))
            }
            (Some(Profile::Custom), None) => {
                return Err(CliError::Config("--profile custom needs --multiplier".into()))
            }
            (_, Some(_)) => return Err(CliError::Config("--multiplier needs --profile custom".into())),
        };
        Ok(RunSpec {
            model: self.model.spec()?,
            input: self.input,
            refs: self.refs,
            config: c,
            profile,
            metric: self.metric,
            out: self.out,
        })
    }
}

fn run(command: Command) -> Result<(), CliError> {
    let mut stdout = io::stdout().lock();
    let mut print = |s: String| {
        let _ = stdout.write_all(s.as_bytes());
    };
    match command {
        Command::Decode(args) => {
            let spec = args.spec()?;
            let outcome = run_decode(&spec)?;
            print(report_table(&outcome.reports));
            print(format!("\nconfig {}\n", outcome.config_hash));
            print(summary_table(&[outcome.summary]));
        }
        Command::Sweep { run, axis, values } => {
            let sweep = SweepSpec {
                base: run.spec()?,
                axis,
                values,
            };
            let outcome = run_sweep(&sweep)?;
            print(summary_table(&outcome.summaries));
            let failed = outcome.failures();
            if failed > 0 {
                log::warn!("{failed} example runs failed; see sweep.csv");
            }
        }
        Command::ValidateMerges {
            run,
            horizons,
            suffix_values,
        } => {
            let spec = run.spec()?;
            if !spec.config.recomb.enabled() {
                log::warn!("recombination is off; no merges will be validated");
            }
            let prepared = Prepared::new(&spec)?;
            let curves = run_validate_merges(&prepared, &horizons, &suffix_values)?;
            print(curve_table(&curves));
        }
        Command::Serve(args) => {
            let spec = args.spec()?;
            if spec.is_bridge() {
                return Err(CliError::Config("serve needs a built-in model".into()));
            }
            let model = spec.load(lattice_search::model::DEFAULT_TOP_K)?;
            lattice_search::model::serve(&model, io::stdin().lock(), io::stdout().lock())
                .map_err(|e| CliError::Io {
                    context: "serving".into(),
                    source: e,
                })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LATTICE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
