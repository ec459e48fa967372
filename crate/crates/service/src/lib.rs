//! Batch runner, configuration and live WebSocket endpoint for the teleqp
//! simulator. The `teleqp` binary is a thin CLI over this crate.

pub mod batch;
pub mod config;
pub mod csv_log;
pub mod serve;
pub mod wire;

pub use batch::{run_batch, BatchSummary, Violation, ViolationKind};
pub use config::{ConfigError, LoadedConfig, RunConfig};
pub use serve::{start, ServeError, ServerHandle};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VIOLATION: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const BIND: i32 = 3;
    /// Output or runtime failure outside the cases above.
    pub const RUNTIME: i32 = 4;
}
