//! Recoverable concurrent objects over a simulated non-volatile memory,
//! together with the machinery needed to verify them: a deterministic
//! scheduler with whole-system crash injection, exhaustive and randomized
//! schedule exploration, durable-linearizability and detectability checking,
//! reachable-memory-state auditing, space accounting, mutation testing, and
//! a bounded search for doubly-perturbing witnesses over sequential
//! specifications.
//!
//! The simulated memory model is the private-cache one: every shared or
//! per-process private cell lives in NVM and survives crashes, while program
//! counters and local variables are volatile and a crash wipes them for all
//! processes at once. Operations are encoded as *step machines* that perform
//! exactly one memory primitive per scheduler step, so a crash can be
//! injected at every step boundary.
//!
//! Three object implementations ship with the crate:
//!
//! - [`objects::reg`] — a bounded-space detectable read/write register,
//! - [`objects::cas`] — a bounded-space detectable CAS object,
//! - [`objects::maxreg`] — a detectable max register that needs no
//!   checkpoint state at all.

pub mod audit;
pub mod campaign;
pub mod checker;
pub mod explore;
pub mod format;
pub mod history;
pub mod nvm;
pub mod objects;
pub mod perturb;
pub mod process;
pub mod report;
pub mod schedule;
pub mod seqspec;
pub mod system;
pub mod value;

pub use checker::{check_history, CheckMode, CheckResult, Verdict};
pub use history::{EventKind, History, HistoryEvent, InstanceId};
pub use nvm::{CellId, Layout, MemoryImage, NvmError};
pub use objects::{Mutation, ObjectConfig, ObjectKind};
pub use schedule::{Directive, Schedule};
pub use system::{CallerPolicy, RunOutcome, System};
pub use value::{CellValue, OpDescriptor, Response};

/// Crate version, embedded in every report so its numbers are reproducible.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
