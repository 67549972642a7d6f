//! The recoverable object implementations and their registry.
//!
//! Each object is a set of *step machines*: pure transition functions on
//! `(ProcessContext, MemoryImage)` that perform one memory primitive per
//! scheduler step. All interleaving belongs to the scheduler; crashing
//! between any two steps is always legal.

pub mod cas;
pub mod maxreg;
pub mod reg;

use crate::nvm::{AccessKind, AccessRecord, CellId, Layout, MemoryImage, NvmError};
use crate::process::ProcessContext;
use crate::seqspec::SeqSpecKind;
use crate::value::{CellValue, OpDescriptor, Response};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// The implemented object kinds, by their registered names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    RegDetect,
    CasDetect,
    MaxReg,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 3] = [
        ObjectKind::RegDetect,
        ObjectKind::CasDetect,
        ObjectKind::MaxReg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::RegDetect => "reg-detect",
            ObjectKind::CasDetect => "cas-detect",
            ObjectKind::MaxReg => "maxreg",
        }
    }

    pub fn parse(s: &str) -> Option<ObjectKind> {
        match s {
            "reg-detect" => Some(ObjectKind::RegDetect),
            "cas-detect" => Some(ObjectKind::CasDetect),
            "maxreg" => Some(ObjectKind::MaxReg),
            _ => None,
        }
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A registered mutation: deletes exactly one named step (or the
/// announcement's checkpoint/response reset) from an otherwise unchanged
/// algorithm. Used to demonstrate that the deleted writes are necessary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mutation {
    RegSkipCp1,
    RegSkipToggleClear,
    RegSkipToggleSet,
    CasSkipCp1,
    CasSkipRdPersist,
    SkipAnnounceReset,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::RegSkipCp1,
        Mutation::RegSkipToggleClear,
        Mutation::RegSkipToggleSet,
        Mutation::CasSkipCp1,
        Mutation::CasSkipRdPersist,
        Mutation::SkipAnnounceReset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mutation::RegSkipCp1 => "reg:skip-cp1",
            Mutation::RegSkipToggleClear => "reg:skip-toggle-clear",
            Mutation::RegSkipToggleSet => "reg:skip-toggle-set",
            Mutation::CasSkipCp1 => "cas:skip-cp1",
            Mutation::CasSkipRdPersist => "cas:skip-rd-persist",
            Mutation::SkipAnnounceReset => "harness:skip-announce-reset",
        }
    }

    pub fn parse(s: &str) -> Option<Mutation> {
        Mutation::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Which object kinds the mutation applies to.
    pub fn applies_to(self, kind: ObjectKind) -> bool {
        match self {
            Mutation::RegSkipCp1 | Mutation::RegSkipToggleClear | Mutation::RegSkipToggleSet => {
                kind == ObjectKind::RegDetect
            }
            Mutation::CasSkipCp1 | Mutation::CasSkipRdPersist => kind == ObjectKind::CasDetect,
            Mutation::SkipAnnounceReset => true,
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown object kind {0:?}; valid kinds: reg-detect, cas-detect, maxreg")]
    UnknownKind(String),
    #[error("unknown mutation {0:?}; valid mutations: {}", Mutation::ALL.map(|m| m.as_str()).join(", "))]
    UnknownMutation(String),
    #[error("mutation {0} does not apply to object {1}")]
    MutationMismatch(Mutation, ObjectKind),
    #[error("{0}")]
    Invalid(String),
}

/// Parameters an object is instantiated with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub kind: ObjectKind,
    /// Number of processes.
    pub n: usize,
    /// Finite value domain for operation arguments and register contents.
    pub domain: Vec<i64>,
    /// Initial value of the object.
    pub v_init: i64,
    /// Declared width of the application value, for the space audit.
    pub value_bits: u64,
    /// The initial register image is attributed to a completed toggle-0
    /// write by process 0, so process 0's first real write must use the
    /// other toggle array. Setting this makes it reuse array 0 instead,
    /// which breaks crash detection; it exists so tests can demonstrate
    /// the checker catching exactly that.
    pub reuse_initial_toggle: bool,
}

impl ObjectConfig {
    pub fn new(kind: ObjectKind, n: usize) -> Self {
        let domain = match kind {
            ObjectKind::RegDetect | ObjectKind::MaxReg => vec![0, 1, 2],
            // |domain| >= N + 1 so the space lower bound's hypothesis holds.
            ObjectKind::CasDetect => (0..=n as i64).collect(),
        };
        let value_bits = domain_bits(&domain);
        ObjectConfig {
            kind,
            n,
            domain,
            v_init: 0,
            value_bits,
            reuse_initial_toggle: false,
        }
    }

    pub fn with_domain(mut self, domain: Vec<i64>) -> Self {
        self.value_bits = domain_bits(&domain);
        self.domain = domain;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::Invalid("need at least one process".into()));
        }
        if self.domain.is_empty() {
            return Err(ConfigError::Invalid("empty value domain".into()));
        }
        if !self.domain.contains(&self.v_init) {
            return Err(ConfigError::Invalid(format!(
                "initial value {} not in domain",
                self.v_init
            )));
        }
        Ok(())
    }

    /// Builds the algorithm, optionally with one registered mutation.
    pub fn build(&self, mutation: Option<Mutation>) -> Result<Arc<dyn Algorithm>, ConfigError> {
        self.validate()?;
        if let Some(m) = mutation {
            if !m.applies_to(self.kind) {
                return Err(ConfigError::MutationMismatch(m, self.kind));
            }
        }
        Ok(match self.kind {
            ObjectKind::RegDetect => Arc::new(reg::RegDetect::new(self, mutation)),
            ObjectKind::CasDetect => Arc::new(cas::CasDetect::new(self, mutation)),
            ObjectKind::MaxReg => Arc::new(maxreg::MaxReg::new(self, mutation)),
        })
    }

    /// The operation alphabet used by script generators.
    pub fn alphabet(&self) -> Vec<OpDescriptor> {
        let mut ops = Vec::new();
        match self.kind {
            ObjectKind::RegDetect => {
                for &v in &self.domain {
                    ops.push(OpDescriptor::Write(v));
                }
                ops.push(OpDescriptor::Read);
            }
            ObjectKind::CasDetect => {
                // Same-value CAS is excluded: a successful cas(x, x) by one
                // process flips its tag bit without changing the value,
                // which makes a concurrent same-value CAS fail its hardware
                // CAS and answer false while the object's value still
                // equals `old` — not linearizable. The implementation only
                // supports value-changing CAS; a regression test drives the
                // degenerate form and shows the checker flagging it.
                for &old in &self.domain {
                    for &new in &self.domain {
                        if old != new {
                            ops.push(OpDescriptor::Cas { old, new });
                        }
                    }
                }
                ops.push(OpDescriptor::Read);
            }
            ObjectKind::MaxReg => {
                for &v in &self.domain {
                    ops.push(OpDescriptor::WriteMax(v));
                }
                ops.push(OpDescriptor::Read);
            }
        }
        ops
    }

    /// The sequential specification the checkers replay against.
    pub fn seq_spec(&self) -> SeqSpecKind {
        match self.kind {
            ObjectKind::RegDetect => SeqSpecKind::Register {
                v_init: self.v_init,
            },
            ObjectKind::CasDetect => SeqSpecKind::Cas {
                v_init: self.v_init,
            },
            ObjectKind::MaxReg => SeqSpecKind::MaxRegister {
                v_init: self.v_init,
            },
        }
    }
}

fn domain_bits(domain: &[i64]) -> u64 {
    (usize::BITS - domain.len().saturating_sub(1).leading_zeros()) as u64
}

/// Outcome of one machine step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    Return(Response),
}

/// Memory access wrapper handed to step machines: performs the primitive on
/// behalf of the stepping process and records it when tracing is on.
pub struct StepEnv<'a> {
    pub mem: &'a mut MemoryImage,
    pub pid: usize,
    trace: Option<&'a mut Vec<AccessRecord>>,
}

impl<'a> StepEnv<'a> {
    pub fn new(
        mem: &'a mut MemoryImage,
        pid: usize,
        trace: Option<&'a mut Vec<AccessRecord>>,
    ) -> Self {
        StepEnv { mem, pid, trace }
    }

    fn record(&mut self, cell: &CellId, kind: AccessKind, value: CellValue) {
        if let Some(trace) = self.trace.as_deref_mut() {
            trace.push(AccessRecord {
                pid: self.pid,
                cell: *cell,
                kind,
                value,
            });
        }
    }

    pub fn read(&mut self, cell: &CellId) -> Result<CellValue, NvmError> {
        let v = self.mem.read(self.pid, cell)?;
        self.record(cell, AccessKind::Read, v.clone());
        Ok(v)
    }

    pub fn write(&mut self, cell: &CellId, v: CellValue) -> Result<(), NvmError> {
        self.mem.write(self.pid, cell, v.clone())?;
        self.record(cell, AccessKind::Write, v);
        Ok(())
    }

    pub fn cas(
        &mut self,
        cell: &CellId,
        expected: &CellValue,
        new: CellValue,
    ) -> Result<bool, NvmError> {
        let success = self.mem.cas(self.pid, cell, expected, new.clone())?;
        self.record(cell, AccessKind::Cas { success }, new);
        Ok(success)
    }
}

/// A recoverable object: operation machines plus recovery machines.
pub trait Algorithm: Send + Sync {
    fn kind(&self) -> ObjectKind;

    fn layout(&self) -> &Arc<Layout>;

    /// The initial memory image, including any initial-attribution fixups.
    fn initial_memory(&self) -> MemoryImage;

    fn accepts(&self, desc: &OpDescriptor) -> bool;

    /// One step of the operation machine for `desc`.
    fn op_step(
        &self,
        desc: &OpDescriptor,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError>;

    /// One step of the recovery machine for `desc`.
    fn recover_step(
        &self,
        desc: &OpDescriptor,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError>;

    /// Static bound on machine steps per attempt, when one exists. The max
    /// register's collect loop is unbounded under contention, so it has none.
    fn step_bound(&self) -> Option<usize>;
}

/// Announcement cell names, shared by every object.
pub const ANN_OP: &str = "Ann.op";
pub const ANN_RESP: &str = "Ann.resp";
pub const ANN_CP: &str = "Ann.cp";

pub fn ann_op(pid: usize) -> CellId {
    CellId::private(ANN_OP, pid)
}
pub fn ann_resp(pid: usize) -> CellId {
    CellId::private(ANN_RESP, pid)
}
pub fn ann_cp(pid: usize) -> CellId {
    CellId::private(ANN_CP, pid)
}

/// The three announcement cell declarations every object layout includes.
pub fn announcement_decls() -> Vec<crate::nvm::CellDecl> {
    use crate::nvm::CellDecl;
    vec![
        CellDecl {
            name: ANN_OP,
            dims: vec![],
            init: CellValue::Bottom,
            cas_capable: false,
            bits_per_cell: 0,
        },
        CellDecl {
            name: ANN_RESP,
            dims: vec![],
            init: CellValue::Bottom,
            cas_capable: false,
            bits_per_cell: 0,
        },
        CellDecl {
            name: ANN_CP,
            dims: vec![],
            init: CellValue::Int(0),
            cas_capable: false,
            bits_per_cell: 0,
        },
    ]
}
