//! Schedules: per-process operation scripts plus an explicit directive
//! sequence telling the scheduler whom to advance at every step.

use crate::value::OpDescriptor;
use serde::{Deserialize, Serialize};

/// One scheduler decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Directive {
    /// Advance process `pid`: announce its next scripted operation if idle,
    /// otherwise run one step of its operation machine.
    Step(usize),
    /// Whole-system crash.
    Crash,
    /// Advance the recovery of a crashed process: dispatch on the first
    /// directive after the crash, then one recovery-machine step at a time.
    RecoverStep(usize),
}

impl Directive {
    pub fn render(&self) -> String {
        match self {
            Directive::Step(p) => format!("step {p}"),
            Directive::Crash => "crash".to_string(),
            Directive::RecoverStep(p) => format!("recover {p}"),
        }
    }
}

/// A finite, replayable schedule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// What each process runs, in order.
    pub scripts: Vec<Vec<OpDescriptor>>,
    pub directives: Vec<Directive>,
}

impl Schedule {
    pub fn new(scripts: Vec<Vec<OpDescriptor>>, directives: Vec<Directive>) -> Self {
        Schedule {
            scripts,
            directives,
        }
    }
}
