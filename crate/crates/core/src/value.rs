//! Values stored in memory cells, operation descriptors, and responses.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A structured value held by one non-volatile cell.
///
/// `Bottom` is the distinguished unwritten value and is distinct from every
/// domain value. Tuples have a fixed arity per cell; a tuple write replaces
/// the whole tuple in one atomic step, so no schedule can observe a
/// half-applied write.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellValue {
    Bottom,
    Ack,
    Bool(bool),
    Int(i64),
    Pid(usize),
    Tuple(Vec<CellValue>),
}

impl CellValue {
    pub fn as_int(&self) -> i64 {
        match self {
            CellValue::Int(v) => *v,
            other => panic!("expected integer cell value, got {other:?}"),
        }
    }

    pub fn as_pid(&self) -> usize {
        match self {
            CellValue::Pid(p) => *p,
            other => panic!("expected pid cell value, got {other:?}"),
        }
    }

    pub fn as_bool(&self) -> bool {
        match self {
            CellValue::Bool(b) => *b,
            other => panic!("expected boolean cell value, got {other:?}"),
        }
    }

    pub fn as_tuple(&self) -> &[CellValue] {
        match self {
            CellValue::Tuple(fields) => fields,
            other => panic!("expected tuple cell value, got {other:?}"),
        }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, CellValue::Bottom)
    }

    /// Appends an unambiguous byte encoding, used for state memoization keys.
    pub fn push_key(&self, out: &mut Vec<u8>) {
        match self {
            CellValue::Bottom => out.push(0),
            CellValue::Ack => out.push(1),
            CellValue::Bool(b) => {
                out.push(2);
                out.push(*b as u8);
            }
            CellValue::Int(v) => {
                out.push(3);
                out.extend_from_slice(&v.to_le_bytes());
            }
            CellValue::Pid(p) => {
                out.push(4);
                out.extend_from_slice(&(*p as u32).to_le_bytes());
            }
            CellValue::Tuple(fields) => {
                out.push(5);
                out.push(fields.len() as u8);
                for f in fields {
                    f.push_key(out);
                }
            }
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Bottom => write!(f, "_"),
            CellValue::Ack => write!(f, "ack"),
            CellValue::Bool(b) => write!(f, "{b}"),
            CellValue::Int(v) => write!(f, "{v}"),
            CellValue::Pid(p) => write!(f, "p{p}"),
            CellValue::Tuple(fields) => {
                write!(f, "<")?;
                for (i, field) in fields.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{field}")?;
                }
                write!(f, ">")
            }
        }
    }
}

/// An operation of one of the implemented or specified objects.
///
/// The object registries validate which descriptors an object kind accepts;
/// the extra descriptors (`Increment`, `FetchAdd`, `Enqueue`, `Dequeue`) feed
/// the sequential specifications used by the perturbation search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpDescriptor {
    Read,
    Write(i64),
    Cas { old: i64, new: i64 },
    WriteMax(i64),
    Increment,
    FetchAdd(i64),
    Enqueue(i64),
    Dequeue,
}

impl OpDescriptor {
    /// Encodes the descriptor for storage in an announcement cell.
    pub fn to_cell(self) -> CellValue {
        let (tag, a, b) = match self {
            OpDescriptor::Read => (0, 0, 0),
            OpDescriptor::Write(v) => (1, v, 0),
            OpDescriptor::Cas { old, new } => (2, old, new),
            OpDescriptor::WriteMax(v) => (3, v, 0),
            OpDescriptor::Increment => (4, 0, 0),
            OpDescriptor::FetchAdd(v) => (5, v, 0),
            OpDescriptor::Enqueue(v) => (6, v, 0),
            OpDescriptor::Dequeue => (7, 0, 0),
        };
        CellValue::Tuple(vec![
            CellValue::Int(tag),
            CellValue::Int(a),
            CellValue::Int(b),
        ])
    }

    pub fn from_cell(cell: &CellValue) -> Option<OpDescriptor> {
        let fields = match cell {
            CellValue::Tuple(fields) if fields.len() == 3 => fields,
            _ => return None,
        };
        let (tag, a, b) = (fields[0].as_int(), fields[1].as_int(), fields[2].as_int());
        Some(match tag {
            0 => OpDescriptor::Read,
            1 => OpDescriptor::Write(a),
            2 => OpDescriptor::Cas { old: a, new: b },
            3 => OpDescriptor::WriteMax(a),
            4 => OpDescriptor::Increment,
            5 => OpDescriptor::FetchAdd(a),
            6 => OpDescriptor::Enqueue(a),
            7 => OpDescriptor::Dequeue,
            _ => return None,
        })
    }
}

impl fmt::Display for OpDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpDescriptor::Read => write!(f, "read"),
            OpDescriptor::Write(v) => write!(f, "write({v})"),
            OpDescriptor::Cas { old, new } => write!(f, "cas({old},{new})"),
            OpDescriptor::WriteMax(v) => write!(f, "writemax({v})"),
            OpDescriptor::Increment => write!(f, "inc"),
            OpDescriptor::FetchAdd(v) => write!(f, "faa({v})"),
            OpDescriptor::Enqueue(v) => write!(f, "enq({v})"),
            OpDescriptor::Dequeue => write!(f, "deq"),
        }
    }
}

/// The response of an operation or recovery function.
///
/// `Fail` is only ever produced by recovery functions and is never persisted
/// to an announcement's response slot: it means the interrupted operation was
/// not linearized and the caller may decide whether to reattempt it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Response {
    Ack,
    Val(i64),
    Bool(bool),
    Empty,
    Fail,
}

impl Response {
    pub fn to_cell(self) -> CellValue {
        match self {
            Response::Ack => CellValue::Ack,
            Response::Val(v) => CellValue::Int(v),
            Response::Bool(b) => CellValue::Bool(b),
            Response::Empty => CellValue::Tuple(vec![]),
            Response::Fail => panic!("fail is never persisted as a response"),
        }
    }

    pub fn from_cell(cell: &CellValue) -> Option<Response> {
        match cell {
            CellValue::Bottom => None,
            CellValue::Ack => Some(Response::Ack),
            CellValue::Int(v) => Some(Response::Val(*v)),
            CellValue::Bool(b) => Some(Response::Bool(*b)),
            CellValue::Tuple(fields) if fields.is_empty() => Some(Response::Empty),
            other => panic!("cell value {other:?} is not a response"),
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Ack => write!(f, "ack"),
            Response::Val(v) => write!(f, "{v}"),
            Response::Bool(b) => write!(f, "{b}"),
            Response::Empty => write!(f, "empty"),
            Response::Fail => write!(f, "fail"),
        }
    }
}
