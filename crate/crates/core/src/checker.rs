//! Durable-linearizability and detectability checking.
//!
//! The checker is an online exhaustive search in the Wing–Gong style: it
//! consumes history events in order and maintains the set of *configurations*
//! that could explain the history so far. A configuration is a sequential-
//! specification state together with the set of still-in-flight operations
//! already committed to a linearization point (and the response each one
//! committed to). When an operation resolves with a response, every
//! configuration must either have committed it with exactly that response or
//! be able to linearize it now, possibly after linearizing other in-flight
//! operations first. An empty configuration set means no linearization
//! explains the history: a violation, reported at the earliest event that
//! caused it.
//!
//! Crash handling follows the durable-linearizability reading of whole-system
//! failures: an operation in flight at a crash stays concurrent with
//! everything after the crash until its recovery resolves it. A recovery
//! returning `fail` asserts the operation was never linearized; in
//! detectability mode configurations that committed it are discarded, while
//! in plain durability mode the operation simply becomes optional (it may
//! have taken effect without anyone learning its response). Operations still
//! pending when the history ends are unconstrained either way.

use crate::history::{EventKind, History, HistoryEvent, InstanceId};
use crate::seqspec::{AbsState, SeqSpecKind};
use crate::value::{OpDescriptor, Response};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

/// Which correctness condition to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckMode {
    /// Durable linearizability only.
    Durable,
    /// Durable linearizability plus detectability: a recovery's verdict about
    /// its operation's linearization must be correct.
    Detectable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    /// The search cap was hit before a verdict; never reported as safe.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail => write!(f, "fail"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// One step of a linearization witness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinStep {
    pub instance: InstanceId,
    pub descriptor: OpDescriptor,
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub verdict: Verdict,
    /// A valid linearization, on pass (when lineage tracking was on).
    pub witness: Option<Vec<LinStep>>,
    /// On fail: which event killed the last configuration and why.
    pub explanation: Option<String>,
    /// Search effort, in configuration expansions.
    pub work: usize,
}

/// Sorted association list; the handful of in-flight operations never
/// justifies a tree.
#[derive(Clone, Debug, PartialEq, Eq)]
struct SortedMap<V: Clone>(Vec<(InstanceId, V)>);

impl<V: Clone> Default for SortedMap<V> {
    fn default() -> Self {
        SortedMap(Vec::new())
    }
}

impl<V: Clone> SortedMap<V> {
    fn get(&self, k: &InstanceId) -> Option<&V> {
        self.0
            .binary_search_by(|(i, _)| i.cmp(k))
            .ok()
            .map(|idx| &self.0[idx].1)
    }

    fn insert(&mut self, k: InstanceId, v: V) {
        match self.0.binary_search_by(|(i, _)| i.cmp(&k)) {
            Ok(idx) => self.0[idx].1 = v,
            Err(idx) => self.0.insert(idx, (k, v)),
        }
    }

    fn remove(&mut self, k: &InstanceId) -> Option<V> {
        self.0
            .binary_search_by(|(i, _)| i.cmp(k))
            .ok()
            .map(|idx| self.0.remove(idx).1)
    }

    fn contains(&self, k: &InstanceId) -> bool {
        self.get(k).is_some()
    }

    fn iter(&self) -> impl Iterator<Item = &(InstanceId, V)> {
        self.0.iter()
    }
}

#[derive(Clone, Debug)]
struct Config {
    state: AbsState,
    /// In-flight operations already linearized, with committed responses.
    early: SortedMap<Response>,
    lineage: Vec<LinStep>,
}

impl Config {
    fn key(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32);
        self.state.push_key(&mut out);
        for (inst, resp) in self.early.iter() {
            out.extend_from_slice(&(inst.pid as u32).to_le_bytes());
            out.extend_from_slice(&(inst.ordinal as u32).to_le_bytes());
            resp.to_cell().push_key(&mut out);
        }
        out
    }
}

/// Incremental checker; feed it events, ask for the verdict any time.
#[derive(Clone)]
pub struct OnlineChecker {
    spec: SeqSpecKind,
    mode: CheckMode,
    pending: SortedMap<OpDescriptor>,
    configs: Vec<Config>,
    track_lineage: bool,
    work: usize,
    work_cap: usize,
    dead_at: Option<usize>,
    capped: bool,
}

/// Default cap on configuration expansions per history.
pub const DEFAULT_WORK_CAP: usize = 1_000_000;

impl OnlineChecker {
    pub fn new(spec: SeqSpecKind, mode: CheckMode, work_cap: usize, track_lineage: bool) -> Self {
        OnlineChecker {
            spec,
            mode,
            pending: SortedMap::default(),
            configs: vec![Config {
                state: spec.initial(),
                early: SortedMap::default(),
                lineage: Vec::new(),
            }],
            track_lineage,
            work: 0,
            work_cap,
            dead_at: None,
            capped: false,
        }
    }

    pub fn is_dead(&self) -> bool {
        self.dead_at.is_some()
    }

    pub fn is_capped(&self) -> bool {
        self.capped
    }

    pub fn verdict(&self) -> Verdict {
        if self.capped {
            Verdict::Inconclusive
        } else if self.dead_at.is_some() {
            Verdict::Fail
        } else {
            Verdict::Pass
        }
    }

    /// Canonical byte key of the checker state, for memoized exploration.
    pub fn state_key(&self) -> Vec<u8> {
        let mut keys: Vec<Vec<u8>> = self.configs.iter().map(|c| c.key()).collect();
        keys.sort_unstable();
        let mut out = Vec::with_capacity(keys.len() * 32 + 8);
        out.push(match (self.dead_at.is_some(), self.capped) {
            (false, false) => 0,
            (true, _) => 1,
            (_, true) => 2,
        });
        for k in keys {
            out.extend_from_slice(&(k.len() as u32).to_le_bytes());
            out.extend_from_slice(&k);
        }
        out
    }

    fn dedup(&mut self) {
        let mut seen = HashSet::with_capacity(self.configs.len());
        self.configs.retain(|c| seen.insert(c.key()));
    }

    /// Feed one event. Returns false once the checker is dead or capped.
    pub fn observe(&mut self, ev: &HistoryEvent) -> bool {
        if self.dead_at.is_some() || self.capped {
            return false;
        }
        match ev.kind {
            EventKind::Crash => {}
            EventKind::Invoke => {
                let inst = ev.instance.expect("invoke carries an instance");
                self.pending
                    .insert(inst, ev.descriptor.expect("invoke carries a descriptor"));
            }
            EventKind::RecoverInvoke => {}
            EventKind::Respond | EventKind::RecoverRespond => {
                let inst = ev.instance.expect("respond carries an instance");
                let resp = ev.value.expect("respond carries a value");
                if resp == Response::Fail {
                    self.observe_fail(inst);
                } else {
                    self.observe_resolve(inst, resp);
                }
                if self.configs.is_empty() && !self.capped {
                    self.dead_at = Some(ev.seq);
                }
            }
        }
        self.dead_at.is_none() && !self.capped
    }

    fn observe_fail(&mut self, inst: InstanceId) {
        self.pending.remove(&inst);
        match self.mode {
            CheckMode::Detectable => {
                // fail asserts the operation was not linearized.
                self.configs.retain(|c| !c.early.contains(&inst));
            }
            CheckMode::Durable => {
                // The operation may or may not have taken effect; configs that
                // committed it keep the effect, the commitment itself expires
                // unchecked because no response was ever returned.
                for c in &mut self.configs {
                    c.early.remove(&inst);
                }
            }
        }
        self.dedup();
    }

    fn observe_resolve(&mut self, inst: InstanceId, resp: Response) {
        let desc = self
            .pending
            .remove(&inst)
            .expect("resolved instance was pending");
        let mut next: Vec<Config> = Vec::with_capacity(self.configs.len());
        let mut seen: HashSet<Vec<u8>> = HashSet::new();
        let configs = std::mem::take(&mut self.configs);
        for mut c in configs {
            if let Some(committed) = c.early.remove(&inst) {
                if committed == resp && seen.insert(c.key()) {
                    next.push(c);
                }
                continue;
            }
            // Linearize `inst` now, possibly after other in-flight ops.
            let mut stack = vec![c];
            let mut expanded: HashSet<Vec<u8>> = HashSet::new();
            while let Some(cur) = stack.pop() {
                self.work += 1;
                if self.work > self.work_cap {
                    self.capped = true;
                    self.configs = next;
                    return;
                }
                let (state, r) = self.spec.apply(&cur.state, &desc);
                if r == resp {
                    let mut done = cur.clone();
                    done.state = state;
                    if self.track_lineage {
                        done.lineage.push(LinStep {
                            instance: inst,
                            descriptor: desc,
                            response: r,
                        });
                    }
                    if seen.insert(done.key()) {
                        next.push(done);
                    }
                }
                for &(other, ref odesc) in self.pending.iter() {
                    if cur.early.contains(&other) {
                        continue;
                    }
                    let (ostate, oresp) = self.spec.apply(&cur.state, odesc);
                    let mut branch = cur.clone();
                    branch.state = ostate;
                    branch.early.insert(other, oresp);
                    if self.track_lineage {
                        branch.lineage.push(LinStep {
                            instance: other,
                            descriptor: *odesc,
                            response: oresp,
                        });
                    }
                    if expanded.insert(branch.key()) {
                        stack.push(branch);
                    }
                }
            }
        }
        self.configs = next;
    }

    /// Final result; call after the last event.
    pub fn result(&self) -> CheckResult {
        let verdict = self.verdict();
        CheckResult {
            verdict,
            witness: if verdict == Verdict::Pass && self.track_lineage {
                self.configs.first().map(|c| c.lineage.clone())
            } else {
                None
            },
            explanation: self
                .dead_at
                .map(|seq| format!("no admissible linearization survives the event at seq {seq}")),
            work: self.work,
        }
    }
}

/// Checks a complete history against a sequential specification.
pub fn check_history(
    history: &History,
    spec: SeqSpecKind,
    mode: CheckMode,
    work_cap: usize,
) -> Result<CheckResult, String> {
    history.validate()?;
    let mut checker = OnlineChecker::new(spec, mode, work_cap, true);
    for ev in &history.events {
        checker.observe(ev);
    }
    Ok(checker.result())
}

/// Replays a pass witness through the specification, confirming every step's
/// committed response. Soundness gate for the checker itself.
pub fn verify_witness(spec: SeqSpecKind, witness: &[LinStep]) -> bool {
    let mut state = spec.initial();
    for step in witness {
        let (next, resp) = spec.apply(&state, &step.descriptor);
        if resp != step.response {
            return false;
        }
        state = next;
    }
    true
}
