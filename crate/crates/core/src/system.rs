//! The simulated system: one memory image, N process contexts, per-process
//! operation scripts, and the event log. Entirely single-threaded; a
//! scheduler advances exactly one process (or injects a crash) per step.

use crate::history::{EventKind, History, HistoryEvent, InstanceId};
use crate::nvm::{AccessRecord, MemoryImage, NvmError};
use crate::objects::{
    ann_cp, ann_op, ann_resp, Algorithm, Mutation, ObjectConfig, StepEnv, StepOutcome,
};
use crate::process::{OpInstance, ProcessContext, Status};
use crate::schedule::{Directive, Schedule};
use crate::value::{CellValue, OpDescriptor, Response};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// What the harness does after a recovery returns fail: abandon the
/// operation, or re-announce it (as a fresh invocation) up to `k` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CallerPolicy {
    #[default]
    Drop,
    Retry(usize),
}

/// Everything needed to instantiate a system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub object: ObjectConfig,
    pub mutation: Option<Mutation>,
    pub caller_policy: CallerPolicy,
    /// Record every memory access; off by default, exploration is faster
    /// without it.
    pub record_accesses: bool,
}

impl SystemConfig {
    pub fn new(object: ObjectConfig) -> Self {
        SystemConfig {
            object,
            mutation: None,
            caller_policy: CallerPolicy::Drop,
            record_accesses: false,
        }
    }

    pub fn with_mutation(mut self, mutation: Option<Mutation>) -> Self {
        self.mutation = mutation;
        self
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Nvm(#[from] NvmError),
    #[error("{0}")]
    Config(#[from] crate::objects::ConfigError),
    #[error("ill-formed schedule at directive {index} ({directive}): {reason}")]
    IllFormed {
        index: usize,
        directive: String,
        reason: String,
    },
}

/// The result of running one schedule to its end (or budget).
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: History,
    pub final_memory: MemoryImage,
    /// Every scripted operation resolved and no process mid-anything.
    pub completed: bool,
    /// The step budget ran out with work still pending.
    pub budget_exhausted: bool,
    pub accesses: Vec<AccessRecord>,
    /// Largest number of machine steps any single attempt consumed.
    pub max_attempt_steps: usize,
}

/// A live simulated system.
#[derive(Clone)]
pub struct System {
    alg: Arc<dyn Algorithm>,
    mutation: Option<Mutation>,
    caller_policy: CallerPolicy,
    record_accesses: bool,
    pub mem: MemoryImage,
    pub procs: Vec<ProcessContext>,
    scripts: Arc<Vec<Vec<OpDescriptor>>>,
    script_pos: Vec<usize>,
    announced: Vec<usize>,
    /// Failed operation awaiting re-announcement under the retry policy.
    pending_retry: Vec<Option<OpDescriptor>>,
    retries_used: Vec<usize>,
    pub history: History,
    record_history: bool,
    seq: usize,
    pub crashes: usize,
    pub accesses: Vec<AccessRecord>,
    pub max_attempt_steps: usize,
}

impl System {
    pub fn new(cfg: &SystemConfig, scripts: Vec<Vec<OpDescriptor>>) -> Result<System, RunError> {
        let alg = cfg.object.build(cfg.mutation)?;
        let n = cfg.object.n;
        if scripts.len() > n {
            return Err(RunError::Config(crate::objects::ConfigError::Invalid(
                format!("{} scripts for {n} processes", scripts.len()),
            )));
        }
        let mut padded = scripts;
        padded.resize(n, Vec::new());
        for script in &padded {
            for desc in script {
                if !alg.accepts(desc) {
                    return Err(RunError::Config(crate::objects::ConfigError::Invalid(
                        format!("object {} does not accept {desc}", alg.kind()),
                    )));
                }
            }
        }
        let mem = alg.initial_memory();
        Ok(System {
            alg,
            mutation: cfg.mutation,
            caller_policy: cfg.caller_policy,
            record_accesses: cfg.record_accesses,
            mem,
            procs: (0..n).map(ProcessContext::new).collect(),
            scripts: Arc::new(padded),
            script_pos: vec![0; n],
            announced: vec![0; n],
            pending_retry: vec![None; n],
            retries_used: vec![0; n],
            history: History::default(),
            record_history: true,
            seq: 0,
            crashes: 0,
            accesses: Vec::new(),
            max_attempt_steps: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.procs.len()
    }

    pub fn algorithm(&self) -> &Arc<dyn Algorithm> {
        &self.alg
    }

    pub fn scripts(&self) -> &[Vec<OpDescriptor>] {
        &self.scripts
    }

    /// Turns history recording off; exploration rebuilds histories by
    /// replaying directives instead of carrying them through every clone.
    pub fn set_record_history(&mut self, on: bool) {
        self.record_history = on;
    }

    fn emit(
        &mut self,
        kind: EventKind,
        pid: Option<usize>,
        instance: Option<InstanceId>,
        descriptor: Option<OpDescriptor>,
        value: Option<Response>,
    ) -> HistoryEvent {
        let ev = HistoryEvent {
            seq: self.seq,
            kind,
            pid,
            instance,
            descriptor,
            value,
        };
        if self.record_history {
            self.history.push(ev.clone());
        }
        ev
    }

    /// Whether `Step(pid)` is currently legal.
    pub fn can_step(&self, pid: usize) -> bool {
        match &self.procs[pid].status {
            Status::Idle => {
                self.pending_retry[pid].is_some() || self.script_pos[pid] < self.scripts[pid].len()
            }
            Status::Running(_) => true,
            _ => false,
        }
    }

    /// Whether `RecoverStep(pid)` is currently legal.
    pub fn can_recover(&self, pid: usize) -> bool {
        matches!(
            self.procs[pid].status,
            Status::Crashed(_) | Status::Recovering(_)
        )
    }

    /// All ops resolved, nothing in flight.
    pub fn is_terminal(&self) -> bool {
        (0..self.n()).all(|p| !self.can_step(p) && !self.can_recover(p))
    }

    /// Some process is mid-operation or mid-recovery, so a crash right now
    /// would change its state.
    pub fn any_machine_live(&self) -> bool {
        self.procs
            .iter()
            .any(|c| matches!(c.status, Status::Running(_) | Status::Recovering(_)))
    }

    /// Announces the next scripted (or retried) operation of an idle process.
    /// The caller initializes the announcement structure immediately before
    /// invoking the operation; this is one scheduler step.
    fn announce(&mut self, pid: usize) -> Result<HistoryEvent, String> {
        let desc = if let Some(desc) = self.pending_retry[pid].take() {
            desc
        } else {
            let pos = self.script_pos[pid];
            let desc = *self.scripts[pid]
                .get(pos)
                .ok_or_else(|| "script exhausted".to_string())?;
            self.script_pos[pid] += 1;
            desc
        };
        let inst = InstanceId {
            pid,
            ordinal: self.announced[pid],
        };
        self.announced[pid] += 1;
        self.mem
            .harness_write(&ann_op(pid), desc.to_cell())
            .map_err(|e| e.to_string())?;
        if self.mutation != Some(Mutation::SkipAnnounceReset) {
            self.mem
                .harness_write(&ann_resp(pid), CellValue::Bottom)
                .map_err(|e| e.to_string())?;
            self.mem
                .harness_write(&ann_cp(pid), CellValue::Int(0))
                .map_err(|e| e.to_string())?;
        }
        let ctx = &mut self.procs[pid];
        ctx.status = Status::Running(OpInstance {
            id: inst,
            descriptor: desc,
        });
        ctx.pc = 0;
        ctx.locals.clear();
        ctx.steps_this_attempt = 0;
        Ok(self.emit(EventKind::Invoke, Some(pid), Some(inst), Some(desc), None))
    }

    fn resolve(
        &mut self,
        pid: usize,
        inst: OpInstance,
        resp: Response,
        recovered: bool,
    ) -> HistoryEvent {
        let kind = if recovered {
            EventKind::RecoverRespond
        } else {
            EventKind::Respond
        };
        self.procs[pid].status = Status::Idle;
        self.procs[pid].pc = 0;
        self.procs[pid].locals.clear();
        if resp == Response::Fail {
            if let CallerPolicy::Retry(k) = self.caller_policy {
                if self.retries_used[pid] < k {
                    self.retries_used[pid] += 1;
                    self.pending_retry[pid] = Some(inst.descriptor);
                }
            }
        }
        self.emit(
            kind,
            Some(pid),
            Some(inst.id),
            Some(inst.descriptor),
            Some(resp),
        )
    }

    /// One machine step of a running operation.
    fn machine_step(&mut self, pid: usize) -> Result<Option<HistoryEvent>, String> {
        let inst = match &self.procs[pid].status {
            Status::Running(op) => op.clone(),
            other => return Err(format!("process not running an operation: {other:?}")),
        };
        #[cfg(debug_assertions)]
        self.assert_announce_discipline(pid, &inst);
        let ctx = &mut self.procs[pid];
        ctx.steps_this_attempt += 1;
        let mut env = StepEnv::new(
            &mut self.mem,
            pid,
            self.record_accesses.then_some(&mut self.accesses),
        );
        let outcome = self
            .alg
            .op_step(&inst.descriptor, ctx, &mut env)
            .map_err(|e| e.to_string())?;
        self.max_attempt_steps = self.max_attempt_steps.max(ctx.steps_this_attempt);
        if let StepOutcome::Return(resp) = outcome {
            debug_assert_ne!(resp, Response::Fail, "operations never return fail");
            return Ok(Some(self.resolve(pid, inst, resp, false)));
        }
        Ok(None)
    }

    #[cfg(debug_assertions)]
    fn assert_announce_discipline(&self, pid: usize, inst: &OpInstance) {
        if self.mutation == Some(Mutation::SkipAnnounceReset) {
            return;
        }
        if self.procs[pid].steps_this_attempt == 0 && self.procs[pid].pc == 0 {
            let cp = self.mem.harness_read(&ann_cp(pid)).unwrap();
            let resp = self.mem.harness_read(&ann_resp(pid)).unwrap();
            let op = self.mem.harness_read(&ann_op(pid)).unwrap();
            assert_eq!(cp, CellValue::Int(0), "checkpoint not reset at first step");
            assert!(resp.is_bottom(), "response not reset at first step");
            assert_eq!(
                OpDescriptor::from_cell(&op),
                Some(inst.descriptor),
                "announced descriptor mismatch"
            );
        }
    }

    /// Advances a crashed process: first the recovery dispatch (consult the
    /// announcement to select the recovery function), then one recovery
    /// machine step at a time.
    fn recover_advance(&mut self, pid: usize) -> Result<Option<HistoryEvent>, String> {
        match self.procs[pid].status.clone() {
            Status::Crashed(inst) => {
                let announced = self
                    .mem
                    .harness_read(&ann_op(pid))
                    .map_err(|e| e.to_string())?;
                let desc = OpDescriptor::from_cell(&announced)
                    .ok_or_else(|| "no announced operation to recover".to_string())?;
                if desc != inst.descriptor {
                    return Err(format!(
                        "announcement {desc} does not match crashed operation {}",
                        inst.descriptor
                    ));
                }
                let ctx = &mut self.procs[pid];
                ctx.status = Status::Recovering(inst.clone());
                ctx.pc = 0;
                ctx.locals.clear();
                ctx.steps_this_attempt = 0;
                Ok(Some(self.emit(
                    EventKind::RecoverInvoke,
                    Some(pid),
                    Some(inst.id),
                    Some(inst.descriptor),
                    None,
                )))
            }
            Status::Recovering(inst) => {
                let ctx = &mut self.procs[pid];
                ctx.steps_this_attempt += 1;
                let mut env = StepEnv::new(
                    &mut self.mem,
                    pid,
                    self.record_accesses.then_some(&mut self.accesses),
                );
                let outcome = self
                    .alg
                    .recover_step(&inst.descriptor, ctx, &mut env)
                    .map_err(|e| e.to_string())?;
                self.max_attempt_steps = self.max_attempt_steps.max(ctx.steps_this_attempt);
                if let StepOutcome::Return(resp) = outcome {
                    return Ok(Some(self.resolve(pid, inst, resp, true)));
                }
                Ok(None)
            }
            other => Err(format!("process not crashed or recovering: {other:?}")),
        }
    }

    /// Whole-system crash: volatile state wiped everywhere, memory untouched.
    pub fn crash_all(&mut self) -> HistoryEvent {
        for ctx in &mut self.procs {
            ctx.crash();
        }
        self.crashes += 1;
        self.emit(EventKind::Crash, None, None, None, None)
    }

    /// Announces an arbitrary operation on an idle process, outside any
    /// script. The reachable-state auditor drives systems this way.
    pub fn announce_external(&mut self, pid: usize, desc: OpDescriptor) -> Result<(), String> {
        if !matches!(self.procs[pid].status, Status::Idle) {
            return Err("announce while an operation is in flight".to_string());
        }
        if !self.alg.accepts(&desc) {
            return Err(format!("object does not accept {desc}"));
        }
        self.pending_retry[pid] = Some(desc);
        self.announce(pid)?;
        self.seq += 1;
        Ok(())
    }

    /// Applies one directive, returning the history event it produced, if
    /// any (announcements, responses, crashes, and recovery dispatches
    /// produce one; intermediate machine steps produce none).
    pub fn apply(&mut self, d: Directive) -> Result<Option<HistoryEvent>, String> {
        let result = match d {
            Directive::Step(pid) if pid < self.n() => match &self.procs[pid].status {
                Status::Idle => self.announce(pid).map(Some),
                Status::Running(_) => self.machine_step(pid),
                other => Err(format!("step of process in state {other:?}")),
            },
            Directive::RecoverStep(pid) if pid < self.n() => self.recover_advance(pid),
            Directive::Crash => Ok(Some(self.crash_all())),
            Directive::Step(pid) | Directive::RecoverStep(pid) => {
                Err(format!("pid {pid} out of range"))
            }
        };
        let ev = result?;
        self.seq += 1;
        Ok(ev)
    }

    /// Exact byte key of the full simulator state, for memoization. Includes
    /// memory, contexts, script positions, retry state, and the crash count.
    pub fn state_key(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(256);
        self.mem.push_key(&mut out);
        for (i, ctx) in self.procs.iter().enumerate() {
            out.push(0xfd);
            ctx.push_key(&mut out);
            out.extend_from_slice(&(self.script_pos[i] as u32).to_le_bytes());
            match &self.pending_retry[i] {
                None => out.push(0),
                Some(d) => {
                    out.push(1);
                    d.to_cell().push_key(&mut out);
                }
            }
            out.push(self.retries_used[i] as u8);
        }
        out.extend_from_slice(&(self.crashes as u32).to_le_bytes());
        out
    }

    pub fn into_outcome(self, budget_exhausted: bool) -> RunOutcome {
        let completed = self.is_terminal();
        RunOutcome {
            history: self.history,
            final_memory: self.mem,
            completed,
            budget_exhausted,
            accesses: self.accesses,
            max_attempt_steps: self.max_attempt_steps,
        }
    }
}

/// Runs a whole schedule deterministically. Identical inputs produce
/// identical histories and memory traces.
pub fn run_schedule(
    cfg: &SystemConfig,
    schedule: &Schedule,
    step_budget: Option<usize>,
) -> Result<RunOutcome, RunError> {
    run_schedule_inner(cfg, schedule, step_budget, None)
}

/// As [`run_schedule`], also returning the memory image after every
/// directive (index `i` holds the image after directive `i`).
pub fn run_schedule_traced(
    cfg: &SystemConfig,
    schedule: &Schedule,
    step_budget: Option<usize>,
) -> Result<(RunOutcome, Vec<MemoryImage>), RunError> {
    let mut trace = Vec::with_capacity(schedule.directives.len());
    let outcome = run_schedule_inner(cfg, schedule, step_budget, Some(&mut trace))?;
    Ok((outcome, trace))
}

fn run_schedule_inner(
    cfg: &SystemConfig,
    schedule: &Schedule,
    step_budget: Option<usize>,
    mut memory_trace: Option<&mut Vec<MemoryImage>>,
) -> Result<RunOutcome, RunError> {
    let mut sys = System::new(cfg, schedule.scripts.clone())?;
    let budget = step_budget.unwrap_or(usize::MAX);
    for (index, &d) in schedule.directives.iter().enumerate() {
        if index >= budget {
            return Ok(sys.into_outcome(true));
        }
        sys.apply(d).map_err(|reason| RunError::IllFormed {
            index,
            directive: d.render(),
            reason,
        })?;
        if let Some(trace) = memory_trace.as_deref_mut() {
            trace.push(sys.mem.clone());
        }
    }
    Ok(sys.into_outcome(false))
}
