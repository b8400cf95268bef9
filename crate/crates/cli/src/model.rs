use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use lattice_search::model::{train_markov, BridgeModel, MarkovModel, TableModel};
use lattice_search::ScoringModel;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A loaded model, shared read-only across worker threads.
pub type Model = Box<dyn ScoringModel + Send + Sync>;

/// Where the scoring model comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    /// JSON table file.
    Table { path: PathBuf },
    Markov {
        corpus: PathBuf,
        order: usize,
        smoothing: f64,
    },
    /// Shell command speaking the bridge protocol on its standard streams.
    Bridge { command: String, timeout_secs: u64 },
}

impl ModelSpec {
    /// Builds a spec from the mutually exclusive `--model`, `--corpus` and
    /// `--bridge-cmd` flags.
    pub fn from_flags(
        model: Option<PathBuf>,
        corpus: Option<PathBuf>,
        order: usize,
        smoothing: f64,
        bridge: Option<String>,
        timeout_secs: u64,
    ) -> Result<Self, CliError> {
        match (model, corpus, bridge) {
            (Some(path), None, None) => Ok(ModelSpec::Table { path }),
            (None, Some(corpus), None) => Ok(ModelSpec::Markov {
                corpus,
                order,
                smoothing,
            }),
            (None, None, Some(command)) => Ok(ModelSpec::Bridge { command, timeout_secs }),
            (None, None, None) => Err(CliError::Config(
                "no model given: pass one of --model, --corpus or --bridge-cmd".into(),
            )),
            _ => Err(CliError::Config(
                "--model, --corpus and --bridge-cmd are mutually exclusive".into(),
            )),
        }
    }

    pub fn is_bridge(&self) -> bool {
        matches!(self, ModelSpec::Bridge { .. })
    }

    pub fn load(&self, top_k: usize) -> Result<Model, CliError> {
        Ok(match self {
            ModelSpec::Table { path } => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                Box::new(TableModel::from_json(&text)?)
            }
            ModelSpec::Markov {
                corpus,
                order,
                smoothing,
            } => {
                let file = fs::File::open(corpus).map_err(|e| CliError::io(corpus, e))?;
                let m: MarkovModel = train_markov(std::io::BufReader::new(file), *order, *smoothing)?;
                log::info!("markov model: order {order}, {} words", m.vocab().len());
                Box::new(m)
            }
            ModelSpec::Bridge { command, timeout_secs } => {
                Box::new(BridgeModel::spawn(command, top_k, Duration::from_secs(*timeout_secs))?)
            }
        })
    }
}
