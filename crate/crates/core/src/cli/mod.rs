//! Configuration, snapshots and batch runs behind the `demailly` binary.

pub mod config;
pub mod run;
pub mod snapshot;

pub use config::{ConfigError, RunConfig};
pub use run::{run_solve, run_sweep, run_verify, SweepAxis};
pub use snapshot::{load_snapshot, save_snapshot, SnapshotError, SnapshotMeta};
