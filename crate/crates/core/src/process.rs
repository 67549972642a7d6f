//! Volatile per-process state: the resume point of the running step machine
//! and its local variable bindings. A crash resets all of it.

use crate::history::InstanceId;
use crate::value::{CellValue, OpDescriptor};

/// What a process is currently doing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Idle,
    Running(OpInstance),
    /// An operation was in flight when the system crashed; the process has
    /// not yet begun recovering it.
    Crashed(OpInstance),
    Recovering(OpInstance),
}

/// One announced invocation of an operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpInstance {
    pub id: InstanceId,
    pub descriptor: OpDescriptor,
}

/// A process's volatile context. Survives nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessContext {
    pub pid: usize,
    pub status: Status,
    pub pc: usize,
    pub locals: Vec<CellValue>,
    /// Steps taken by the current machine since its invoke or recover-invoke;
    /// the wait-freedom audit asserts bounds on the maximum ever observed.
    pub steps_this_attempt: usize,
}

impl ProcessContext {
    pub fn new(pid: usize) -> Self {
        ProcessContext {
            pid,
            status: Status::Idle,
            pc: 0,
            locals: Vec::new(),
            steps_this_attempt: 0,
        }
    }

    /// Crash semantics: the program counter and locals are wiped, and any
    /// in-flight operation or recovery is marked crashed.
    pub fn crash(&mut self) {
        self.pc = 0;
        self.locals.clear();
        self.steps_this_attempt = 0;
        self.status = match std::mem::replace(&mut self.status, Status::Idle) {
            Status::Running(op) | Status::Recovering(op) | Status::Crashed(op) => {
                Status::Crashed(op)
            }
            Status::Idle => Status::Idle,
        };
    }

    pub fn local(&self, slot: usize) -> &CellValue {
        &self.locals[slot]
    }

    pub fn set_local(&mut self, slot: usize, v: CellValue) {
        if self.locals.len() <= slot {
            self.locals.resize(slot + 1, CellValue::Bottom);
        }
        self.locals[slot] = v;
    }

    pub fn push_key(&self, out: &mut Vec<u8>) {
        match &self.status {
            Status::Idle => out.push(0),
            Status::Running(op) => {
                out.push(1);
                op.descriptor.to_cell().push_key(out);
            }
            Status::Crashed(op) => {
                out.push(2);
                op.descriptor.to_cell().push_key(out);
            }
            Status::Recovering(op) => {
                out.push(3);
                op.descriptor.to_cell().push_key(out);
            }
        }
        out.extend_from_slice(&(self.pc as u32).to_le_bytes());
        out.push(self.locals.len() as u8);
        for l in &self.locals {
            l.push_key(out);
        }
    }
}
