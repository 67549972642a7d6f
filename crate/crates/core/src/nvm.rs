//! The simulated non-volatile memory: named cells, per-object layouts, and
//! the [`MemoryImage`] that survives crashes.
//!
//! Shared cells are readable and writable by every process; private cells
//! belong to exactly one process and the model rejects any access by another
//! process (the algorithms assume single-owner private cells, the simulator
//! enforces it). CAS is only allowed on cells declared CAS-capable at layout
//! time.

use crate::value::CellValue;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// A cell name plus optional array indices, e.g. `R`, `A[1][0][1]`, `MR[2]`.
///
/// Private cells carry their owner as the first index: `RD[1]` is the
/// recovery-data cell of process 1. Every resolvable id names exactly one
/// cell in a memory image. Indices are stored inline; cell ids are built on
/// every machine step and must not allocate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellId {
    pub name: &'static str,
    index: [usize; 3],
    arity: u8,
}

impl CellId {
    pub fn scalar(name: &'static str) -> Self {
        CellId {
            name,
            index: [0; 3],
            arity: 0,
        }
    }

    pub fn indexed(name: &'static str, index: impl AsRef<[usize]>) -> Self {
        let idx = index.as_ref();
        assert!(idx.len() <= 3, "cell arrays have at most three dimensions");
        let mut index = [0usize; 3];
        index[..idx.len()].copy_from_slice(idx);
        CellId {
            name,
            index,
            arity: idx.len() as u8,
        }
    }

    /// The private cell `name` owned by `pid` (scalar per process).
    pub fn private(name: &'static str, pid: usize) -> Self {
        CellId {
            name,
            index: [pid, 0, 0],
            arity: 1,
        }
    }

    pub fn index(&self) -> &[usize] {
        &self.index[..self.arity as usize]
    }

    fn strip_owner(&self) -> CellId {
        debug_assert!(self.arity >= 1);
        CellId {
            name: self.name,
            index: [self.index[1], self.index[2], 0],
            arity: self.arity - 1,
        }
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for i in self.index() {
            write!(f, "[{i}]")?;
        }
        Ok(())
    }
}

/// Errors raised by the memory model itself.
///
/// `ModelViolation` means the *harness or a test* drove the model outside its
/// contract (e.g. a private-cell access by a non-owner); it never indicates a
/// bug in an object algorithm.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NvmError {
    #[error("unknown cell {0}")]
    UnknownCell(String),
    #[error("cell {0} does not support CAS")]
    NotCasCapable(String),
    #[error("model violation: {0}")]
    ModelViolation(String),
}

/// One declared cell family: a scalar or an array of cells of equal shape.
#[derive(Debug, Clone)]
pub struct CellDecl {
    pub name: &'static str,
    /// Array dimensions; empty for a scalar cell.
    pub dims: Vec<usize>,
    pub init: CellValue,
    pub cas_capable: bool,
    /// Declared width in bits of the abstract content, used by the space
    /// auditor. For an array declaration this is the width of one entry.
    pub bits_per_cell: u64,
}

impl CellDecl {
    fn cell_count(&self) -> usize {
        self.dims.iter().product::<usize>().max(1)
    }
}

#[derive(Debug, Clone)]
struct ResolvedDecl {
    decl: CellDecl,
    offset: usize,
}

/// A compiled cell layout: resolves [`CellId`]s to flat slots.
///
/// One layout instance describes the shared cells of an object plus the
/// per-process private cells (each process gets its own copy of the private
/// declarations).
#[derive(Debug, Clone)]
pub struct Layout {
    shared: Vec<ResolvedDecl>,
    private: Vec<ResolvedDecl>,
    shared_len: usize,
    private_len: usize,
    n: usize,
}

impl Layout {
    pub fn new(n: usize, shared: Vec<CellDecl>, private: Vec<CellDecl>) -> Self {
        fn resolve(decls: Vec<CellDecl>) -> (Vec<ResolvedDecl>, usize) {
            let mut offset = 0;
            let mut resolved = Vec::new();
            for decl in decls {
                let count = decl.cell_count();
                resolved.push(ResolvedDecl { decl, offset });
                offset += count;
            }
            (resolved, offset)
        }
        let (shared, shared_len) = resolve(shared);
        let (private, private_len) = resolve(private);
        Layout {
            shared,
            private,
            shared_len,
            private_len,
            n,
        }
    }

    /// Total declared shared bits; the analytic space audit.
    pub fn shared_bits(&self) -> u64 {
        self.shared
            .iter()
            .map(|r| r.decl.bits_per_cell * r.decl.cell_count() as u64)
            .sum()
    }

    fn slot(decls: &[ResolvedDecl], id: &CellId) -> Result<(usize, bool), NvmError> {
        let decl = decls
            .iter()
            .find(|d| d.decl.name == id.name)
            .ok_or_else(|| NvmError::UnknownCell(id.to_string()))?;
        if id.index().len() != decl.decl.dims.len() {
            return Err(NvmError::UnknownCell(id.to_string()));
        }
        let mut flat = 0;
        for (i, (&idx, &dim)) in id.index().iter().zip(&decl.decl.dims).enumerate() {
            if idx >= dim {
                return Err(NvmError::UnknownCell(format!(
                    "{id} (index {i} out of bounds)"
                )));
            }
            flat = flat * dim + idx;
        }
        Ok((decl.offset + flat, decl.decl.cas_capable))
    }

    fn shared_slot(&self, id: &CellId) -> Result<(usize, bool), NvmError> {
        Self::slot(&self.shared, id)
    }

    fn private_slot(&self, id: &CellId) -> Result<(usize, bool), NvmError> {
        Self::slot(&self.private, id)
    }

    pub fn is_shared(&self, id: &CellId) -> bool {
        self.shared.iter().any(|d| d.decl.name == id.name)
    }

    fn initial_cells(decls: &[ResolvedDecl], len: usize) -> Vec<CellValue> {
        let mut cells = vec![CellValue::Bottom; len];
        for r in decls {
            for c in cells.iter_mut().skip(r.offset).take(r.decl.cell_count()) {
                *c = r.decl.init.clone();
            }
        }
        cells
    }

    /// Builds the initial memory image for this layout.
    pub fn initial_memory(self: &Arc<Self>) -> MemoryImage {
        MemoryImage {
            layout: Arc::clone(self),
            shared: Self::initial_cells(&self.shared, self.shared_len),
            privates: (0..self.n)
                .map(|_| Self::initial_cells(&self.private, self.private_len))
                .collect(),
        }
    }
}

/// Which process performed an access and how, for the step trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
    Cas { success: bool },
}

/// One recorded memory access; collected only when tracing is enabled.
#[derive(Debug, Clone)]
pub struct AccessRecord {
    pub pid: usize,
    pub cell: CellId,
    pub kind: AccessKind,
    pub value: CellValue,
}

/// The complete non-volatile state: shared cells plus per-process private
/// cells. A crash leaves it untouched.
///
/// Two images are *memory-equivalent* when their shared cells agree; the
/// reachable-state auditor compares on that notion by default and can be
/// asked to include private cells.
#[derive(Debug, Clone)]
pub struct MemoryImage {
    layout: Arc<Layout>,
    shared: Vec<CellValue>,
    privates: Vec<Vec<CellValue>>,
}

impl PartialEq for MemoryImage {
    fn eq(&self, other: &Self) -> bool {
        self.shared == other.shared && self.privates == other.privates
    }
}
impl Eq for MemoryImage {}

impl MemoryImage {
    /// Splits a private cell id into (owner, slot), validating bounds.
    fn private_cell(&self, id: &CellId) -> Result<(usize, usize), NvmError> {
        let owner = *id
            .index()
            .first()
            .ok_or_else(|| NvmError::UnknownCell(format!("{id} (missing owner index)")))?;
        if owner >= self.privates.len() {
            return Err(NvmError::UnknownCell(format!("{id} (owner out of range)")));
        }
        let (slot, _) = self.layout.private_slot(&id.strip_owner())?;
        Ok((owner, slot))
    }

    /// Reads a cell on behalf of process `p`.
    pub fn read(&self, p: usize, id: &CellId) -> Result<CellValue, NvmError> {
        if self.layout.is_shared(id) {
            let (slot, _) = self.layout.shared_slot(id)?;
            Ok(self.shared[slot].clone())
        } else {
            let (owner, slot) = self.private_cell(id)?;
            if owner != p {
                return Err(NvmError::ModelViolation(format!(
                    "process {p} accessed private cell {id}"
                )));
            }
            Ok(self.privates[owner][slot].clone())
        }
    }

    /// Reads a private cell regardless of the acting process. Only the
    /// harness uses this (recovery dispatch, audits); algorithm steps go
    /// through [`read`](MemoryImage::read).
    pub fn harness_read(&self, id: &CellId) -> Result<CellValue, NvmError> {
        if self.layout.is_shared(id) {
            let (slot, _) = self.layout.shared_slot(id)?;
            Ok(self.shared[slot].clone())
        } else {
            let (owner, slot) = self.private_cell(id)?;
            Ok(self.privates[owner][slot].clone())
        }
    }

    /// Writes a cell on behalf of process `p`; atomic, one scheduler step.
    pub fn write(&mut self, p: usize, id: &CellId, v: CellValue) -> Result<(), NvmError> {
        if self.layout.is_shared(id) {
            let (slot, _) = self.layout.shared_slot(id)?;
            self.shared[slot] = v;
        } else {
            let (owner, slot) = self.private_cell(id)?;
            if owner != p {
                return Err(NvmError::ModelViolation(format!(
                    "process {p} accessed private cell {id}"
                )));
            }
            self.privates[owner][slot] = v;
        }
        Ok(())
    }

    /// Writes a private cell on behalf of the harness (announcements).
    pub fn harness_write(&mut self, id: &CellId, v: CellValue) -> Result<(), NvmError> {
        let (owner, slot) = self.private_cell(id)?;
        self.privates[owner][slot] = v;
        Ok(())
    }

    /// Compare-and-swap with structural tuple equality on the full value.
    pub fn cas(
        &mut self,
        p: usize,
        id: &CellId,
        expected: &CellValue,
        new: CellValue,
    ) -> Result<bool, NvmError> {
        let _ = p;
        if !self.layout.is_shared(id) {
            return Err(NvmError::NotCasCapable(id.to_string()));
        }
        let (slot, cas_capable) = self.layout.shared_slot(id)?;
        if !cas_capable {
            return Err(NvmError::NotCasCapable(id.to_string()));
        }
        if &self.shared[slot] == expected {
            self.shared[slot] = new;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// True when the shared cells agree: the two images are memory-equivalent.
    pub fn memory_equivalent(&self, other: &MemoryImage) -> bool {
        self.shared == other.shared
    }

    /// Byte key of the shared cells only.
    pub fn shared_key(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.shared.len() * 4);
        for c in &self.shared {
            c.push_key(&mut out);
        }
        out
    }

    /// Appends the full image (shared + private) to a memoization key.
    pub fn push_key(&self, out: &mut Vec<u8>) {
        for c in &self.shared {
            c.push_key(out);
        }
        for per_pid in &self.privates {
            out.push(0xfe);
            for c in per_pid {
                c.push_key(out);
            }
        }
    }

    /// Renders every cell as `name=value` lines, in declaration order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut emit = |label: String, v: &CellValue| {
            out.push_str(&format!("{label}={v}\n"));
        };
        for r in &self.layout.shared {
            for flat in 0..r.decl.cell_count() {
                let id = unflatten(r, flat);
                emit(id, &self.shared[r.offset + flat]);
            }
        }
        for (pid, cells) in self.privates.iter().enumerate() {
            for r in &self.layout.private {
                for flat in 0..r.decl.cell_count() {
                    let id = unflatten(r, flat);
                    emit(
                        format!("{}[{pid}]{}", r.decl.name, &id[r.decl.name.len()..]),
                        &cells[r.offset + flat],
                    );
                }
            }
        }
        out
    }
}

fn unflatten(r: &ResolvedDecl, mut flat: usize) -> String {
    let mut idx = vec![0usize; r.decl.dims.len()];
    for (i, &dim) in r.decl.dims.iter().enumerate().rev() {
        idx[i] = flat % dim;
        flat /= dim;
    }
    let mut s = r.decl.name.to_string();
    for i in idx {
        s.push_str(&format!("[{i}]"));
    }
    s
}
