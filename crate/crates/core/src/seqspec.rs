//! Sequential object specifications: deterministic transition functions the
//! checkers replay linearizations through, and the perturbation analyzer
//! searches over.

use crate::value::{OpDescriptor, Response};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;

/// Abstract object state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AbsState {
    Val(i64),
    Queue(VecDeque<i64>),
}

impl AbsState {
    pub fn push_key(&self, out: &mut Vec<u8>) {
        match self {
            AbsState::Val(v) => {
                out.push(1);
                out.extend_from_slice(&v.to_le_bytes());
            }
            AbsState::Queue(q) => {
                out.push(2);
                out.extend_from_slice(&(q.len() as u32).to_le_bytes());
                for v in q {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
}

/// The shipped sequential specifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeqSpecKind {
    Register {
        v_init: i64,
    },
    Cas {
        v_init: i64,
    },
    MaxRegister {
        v_init: i64,
    },
    /// Counter over `{0, .., max}`; increments saturate at the top value.
    BoundedCounter {
        max: i64,
    },
    FetchAdd {
        v_init: i64,
    },
    Queue,
}

impl SeqSpecKind {
    pub fn name(self) -> &'static str {
        match self {
            SeqSpecKind::Register { .. } => "register",
            SeqSpecKind::Cas { .. } => "cas",
            SeqSpecKind::MaxRegister { .. } => "maxreg",
            SeqSpecKind::BoundedCounter { .. } => "bounded-counter",
            SeqSpecKind::FetchAdd { .. } => "fetch-add",
            SeqSpecKind::Queue => "queue",
        }
    }

    /// Looks a spec up by its registered name, with default parameters.
    pub fn parse(name: &str) -> Option<SeqSpecKind> {
        Some(match name {
            "register" => SeqSpecKind::Register { v_init: 0 },
            "cas" => SeqSpecKind::Cas { v_init: 0 },
            "maxreg" => SeqSpecKind::MaxRegister { v_init: 0 },
            "bounded-counter" => SeqSpecKind::BoundedCounter { max: 2 },
            "fetch-add" => SeqSpecKind::FetchAdd { v_init: 0 },
            "queue" => SeqSpecKind::Queue,
            _ => return None,
        })
    }

    pub fn initial(self) -> AbsState {
        match self {
            SeqSpecKind::Register { v_init }
            | SeqSpecKind::Cas { v_init }
            | SeqSpecKind::MaxRegister { v_init }
            | SeqSpecKind::FetchAdd { v_init } => AbsState::Val(v_init),
            SeqSpecKind::BoundedCounter { .. } => AbsState::Val(0),
            SeqSpecKind::Queue => AbsState::Queue(VecDeque::new()),
        }
    }

    /// Deterministic, total on the spec's alphabet.
    pub fn apply(self, state: &AbsState, op: &OpDescriptor) -> (AbsState, Response) {
        match (self, state, op) {
            (SeqSpecKind::Register { .. }, AbsState::Val(v), OpDescriptor::Read) => {
                (AbsState::Val(*v), Response::Val(*v))
            }
            (SeqSpecKind::Register { .. }, AbsState::Val(_), OpDescriptor::Write(x)) => {
                (AbsState::Val(*x), Response::Ack)
            }
            (SeqSpecKind::Cas { .. }, AbsState::Val(v), OpDescriptor::Read) => {
                (AbsState::Val(*v), Response::Val(*v))
            }
            (SeqSpecKind::Cas { .. }, AbsState::Val(v), OpDescriptor::Cas { old, new }) => {
                if v == old {
                    (AbsState::Val(*new), Response::Bool(true))
                } else {
                    (AbsState::Val(*v), Response::Bool(false))
                }
            }
            (SeqSpecKind::MaxRegister { .. }, AbsState::Val(v), OpDescriptor::Read) => {
                (AbsState::Val(*v), Response::Val(*v))
            }
            (SeqSpecKind::MaxRegister { .. }, AbsState::Val(v), OpDescriptor::WriteMax(x)) => {
                (AbsState::Val((*v).max(*x)), Response::Ack)
            }
            (SeqSpecKind::BoundedCounter { .. }, AbsState::Val(v), OpDescriptor::Read) => {
                (AbsState::Val(*v), Response::Val(*v))
            }
            (SeqSpecKind::BoundedCounter { max }, AbsState::Val(v), OpDescriptor::Increment) => {
                (AbsState::Val((*v + 1).min(max)), Response::Ack)
            }
            (SeqSpecKind::FetchAdd { .. }, AbsState::Val(v), OpDescriptor::Read) => {
                (AbsState::Val(*v), Response::Val(*v))
            }
            (SeqSpecKind::FetchAdd { .. }, AbsState::Val(v), OpDescriptor::FetchAdd(k)) => {
                (AbsState::Val(v + k), Response::Val(*v))
            }
            (SeqSpecKind::Queue, AbsState::Queue(q), OpDescriptor::Enqueue(x)) => {
                let mut q = q.clone();
                q.push_back(*x);
                (AbsState::Queue(q), Response::Ack)
            }
            (SeqSpecKind::Queue, AbsState::Queue(q), OpDescriptor::Dequeue) => {
                let mut q = q.clone();
                match q.pop_front() {
                    Some(v) => (AbsState::Queue(q), Response::Val(v)),
                    None => (AbsState::Queue(q), Response::Empty),
                }
            }
            (spec, state, op) => {
                panic!("spec {} cannot apply {op} to {state:?}", spec.name())
            }
        }
    }

    /// The finite operation alphabet used by the perturbation search.
    pub fn alphabet(self, domain: &[i64]) -> Vec<OpDescriptor> {
        let mut ops = Vec::new();
        match self {
            SeqSpecKind::Register { .. } => {
                for &v in domain {
                    ops.push(OpDescriptor::Write(v));
                }
                ops.push(OpDescriptor::Read);
            }
            SeqSpecKind::Cas { .. } => {
                for &old in domain {
                    for &new in domain {
                        ops.push(OpDescriptor::Cas { old, new });
                    }
                }
                ops.push(OpDescriptor::Read);
            }
            SeqSpecKind::MaxRegister { .. } => {
                for &v in domain {
                    ops.push(OpDescriptor::WriteMax(v));
                }
                ops.push(OpDescriptor::Read);
            }
            SeqSpecKind::BoundedCounter { .. } => {
                ops.push(OpDescriptor::Increment);
                ops.push(OpDescriptor::Read);
            }
            SeqSpecKind::FetchAdd { .. } => {
                ops.push(OpDescriptor::FetchAdd(1));
                ops.push(OpDescriptor::Read);
            }
            SeqSpecKind::Queue => {
                for &v in domain {
                    ops.push(OpDescriptor::Enqueue(v));
                }
                ops.push(OpDescriptor::Dequeue);
            }
        }
        ops
    }

    /// Replays a sequential history from the initial state, returning every
    /// response in order.
    pub fn replay(self, ops: &[OpDescriptor]) -> Vec<Response> {
        let mut state = self.initial();
        let mut out = Vec::with_capacity(ops.len());
        for op in ops {
            let (next, resp) = self.apply(&state, op);
            state = next;
            out.push(resp);
        }
        out
    }
}

impl fmt::Display for SeqSpecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_semantics() {
        let spec = SeqSpecKind::Register { v_init: 0 };
        let resps = spec.replay(&[
            OpDescriptor::Read,
            OpDescriptor::Write(7),
            OpDescriptor::Read,
        ]);
        assert_eq!(
            resps,
            vec![Response::Val(0), Response::Ack, Response::Val(7)]
        );
    }

    #[test]
    fn cas_semantics() {
        let spec = SeqSpecKind::Cas { v_init: 0 };
        let resps = spec.replay(&[
            OpDescriptor::Cas { old: 0, new: 1 },
            OpDescriptor::Cas { old: 0, new: 1 },
            OpDescriptor::Read,
        ]);
        assert_eq!(
            resps,
            vec![
                Response::Bool(true),
                Response::Bool(false),
                Response::Val(1)
            ]
        );
    }

    #[test]
    fn bounded_counter_saturates() {
        let spec = SeqSpecKind::BoundedCounter { max: 2 };
        let resps = spec.replay(&[
            OpDescriptor::Increment,
            OpDescriptor::Increment,
            OpDescriptor::Increment,
            OpDescriptor::Read,
        ]);
        assert_eq!(resps[3], Response::Val(2));
    }

    #[test]
    fn queue_fifo_and_empty() {
        let spec = SeqSpecKind::Queue;
        let resps = spec.replay(&[
            OpDescriptor::Enqueue(4),
            OpDescriptor::Enqueue(5),
            OpDescriptor::Dequeue,
            OpDescriptor::Dequeue,
            OpDescriptor::Dequeue,
        ]);
        assert_eq!(
            &resps[2..],
            &[Response::Val(4), Response::Val(5), Response::Empty]
        );
    }

    #[test]
    fn fetch_add_returns_old() {
        let spec = SeqSpecKind::FetchAdd { v_init: 3 };
        let resps = spec.replay(&[OpDescriptor::FetchAdd(1), OpDescriptor::Read]);
        assert_eq!(resps, vec![Response::Val(3), Response::Val(4)]);
    }
}
