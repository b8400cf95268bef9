use std::io;
use std::path::Path;

use lattice_search::lattice::LatticeError;
use lattice_search::model::ModelError;
use lattice_search::search::SearchError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            context: path.display().to_string(),
            source,
        }
    }

    /// 2 for anything caught before decoding starts, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Search(SearchError::Config(_)) => 2,
            CliError::Model(ModelError::Config(_)) => 2,
            _ => 1,
        }
    }
}
