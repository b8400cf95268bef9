//! Run specifications, sweeps and report files behind the `lattice` binary.
//!
//! Every run is reproducible from its [`RunSpec`]: per-example seeds are
//! split from the root seed, and outputs are named by input line index and
//! configuration hash.

mod error;
pub mod merges;
pub mod model;
pub mod run;
pub mod seeds;
pub mod sweep;

pub use error::CliError;
pub use merges::{curve_table, run_validate_merges, MergeCurve};
pub use model::{Model, ModelSpec};
pub use run::{run_decode, DecodeOutcome, Prepared, RunSpec};
pub use sweep::{run_sweep, Axis, SweepOutcome, SweepSpec};
