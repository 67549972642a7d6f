//! The ordered event log a run produces and the checkers consume.

use crate::value::{OpDescriptor, Response};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Identifies one operation instance, stable across schedules: the pid plus
/// the per-process invocation ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceId {
    pub pid: usize,
    pub ordinal: usize,
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.pid, self.ordinal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Invoke,
    Respond,
    Crash,
    RecoverInvoke,
    RecoverRespond,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Invoke => "invoke",
            EventKind::Respond => "respond",
            EventKind::Crash => "crash",
            EventKind::RecoverInvoke => "recover-invoke",
            EventKind::RecoverRespond => "recover-respond",
        }
    }
}

/// One history event. Crash events carry no pid: the whole system fails.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub seq: usize,
    pub kind: EventKind,
    pub pid: Option<usize>,
    pub instance: Option<InstanceId>,
    pub descriptor: Option<OpDescriptor>,
    pub value: Option<Response>,
}

impl HistoryEvent {
    pub fn render(&self) -> String {
        let mut s = format!("{} {}", self.seq, self.kind.as_str());
        if let Some(pid) = self.pid {
            s.push_str(&format!(" p={pid}"));
        }
        if let Some(inst) = self.instance {
            s.push_str(&format!(" inst={inst}"));
        }
        if let Some(desc) = self.descriptor {
            s.push_str(&format!(" op={desc}"));
        }
        if let Some(v) = self.value {
            s.push_str(&format!(" val={v}"));
        }
        s
    }
}

/// An ordered event log with strictly increasing sequence numbers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub events: Vec<HistoryEvent>,
}

impl History {
    pub fn push(&mut self, ev: HistoryEvent) {
        debug_assert!(self
            .events
            .last()
            .map(|prev| prev.seq < ev.seq)
            .unwrap_or(true));
        self.events.push(ev);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Renders one event per line, ready for the versioned text format.
    pub fn render_lines(&self) -> Vec<String> {
        self.events.iter().map(|e| e.render()).collect()
    }

    /// Basic well-formedness: increasing seq, responses matched to a prior
    /// invocation of the same instance, crashes without pids.
    pub fn validate(&self) -> Result<(), String> {
        let mut last_seq = None;
        let mut open: std::collections::HashMap<InstanceId, bool> = Default::default();
        for ev in &self.events {
            if let Some(prev) = last_seq {
                if ev.seq <= prev {
                    return Err(format!("seq {} not increasing", ev.seq));
                }
            }
            last_seq = Some(ev.seq);
            match ev.kind {
                EventKind::Crash => {
                    if ev.pid.is_some() {
                        return Err(format!("crash event at seq {} has a pid", ev.seq));
                    }
                }
                EventKind::Invoke => {
                    let inst = ev.instance.ok_or("invoke without instance")?;
                    if open.insert(inst, true).is_some() {
                        return Err(format!("instance {inst} invoked twice"));
                    }
                }
                EventKind::RecoverInvoke => {
                    let inst = ev.instance.ok_or("recover-invoke without instance")?;
                    if !open.contains_key(&inst) {
                        return Err(format!("recovery of unknown instance {inst}"));
                    }
                }
                EventKind::Respond | EventKind::RecoverRespond => {
                    let inst = ev.instance.ok_or("respond without instance")?;
                    match open.get_mut(&inst) {
                        Some(pending @ true) => *pending = false,
                        Some(false) => return Err(format!("instance {inst} responded twice")),
                        None => return Err(format!("response for unknown instance {inst}")),
                    }
                }
            }
        }
        Ok(())
    }
}
