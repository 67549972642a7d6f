//! Bounded-space detectable read/write register.
//!
//! The register value lives in a single shared cell `R` holding
//! `<val, writer, toggle>`: the current value, the pid that wrote it, and
//! which of the writer's two toggle-bit rows that write used. A shared
//! boolean array `A[reader][writer][toggle]` lets a recovering writer decide
//! whether `R` was overwritten between its snapshot and its crash even when
//! the same triple reappears: a writer can only reuse a toggle index after
//! completing a write with the other index, and completing a write sets the
//! whole row for that index, which the snapshotting process had cleared.
//!
//! Each process also owns private cells: `RD` (the snapshot persisted for
//! recovery) and `T` (which toggle row its next write uses).

use super::{
    ann_cp, ann_resp, announcement_decls, Algorithm, Mutation, ObjectConfig, ObjectKind, StepEnv,
    StepOutcome,
};
use crate::nvm::{CellDecl, CellId, Layout, MemoryImage, NvmError};
use crate::process::ProcessContext;
use crate::value::{CellValue, OpDescriptor, Response};
use std::sync::Arc;

const R: &str = "R";
const A: &str = "A";
const RD: &str = "RD";
const T: &str = "T";

/// Local slots used by the write and recovery machines.
const L_SNAP: usize = 0; // <qval, q, qtoggle> read from R (or from RD)
const L_MTOGGLE: usize = 1;
const L_VAL: usize = 2; // read machines: value extracted from R

fn triple(val: i64, writer: usize, toggle: i64) -> CellValue {
    CellValue::Tuple(vec![
        CellValue::Int(val),
        CellValue::Pid(writer),
        CellValue::Int(toggle),
    ])
}

pub struct RegDetect {
    n: usize,
    layout: Arc<Layout>,
    mutation: Option<Mutation>,
    reuse_initial_toggle: bool,
}

impl RegDetect {
    pub fn new(cfg: &ObjectConfig, mutation: Option<Mutation>) -> Self {
        let ceil_log2_n = (usize::BITS - cfg.n.saturating_sub(1).leading_zeros()) as u64;
        let shared = vec![
            CellDecl {
                name: R,
                dims: vec![],
                init: triple(cfg.v_init, 0, 0),
                cas_capable: false,
                bits_per_cell: cfg.value_bits + ceil_log2_n + 1,
            },
            CellDecl {
                name: A,
                dims: vec![cfg.n, cfg.n, 2],
                init: CellValue::Bool(false),
                cas_capable: false,
                bits_per_cell: 1,
            },
        ];
        let mut private = vec![
            CellDecl {
                name: RD,
                dims: vec![],
                init: CellValue::Bottom,
                cas_capable: false,
                bits_per_cell: 0,
            },
            CellDecl {
                name: T,
                dims: vec![],
                init: CellValue::Int(0),
                cas_capable: false,
                bits_per_cell: 0,
            },
        ];
        private.extend(announcement_decls());
        RegDetect {
            n: cfg.n,
            layout: Arc::new(Layout::new(cfg.n, shared, private)),
            mutation,
            reuse_initial_toggle: cfg.reuse_initial_toggle,
        }
    }

    fn skip(&self, m: Mutation) -> bool {
        self.mutation == Some(m)
    }

    /// Write-machine program counters. `pc` 7..7+N is the toggle-row loop.
    fn write_step(
        &self,
        val: i64,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        let p = ctx.pid;
        // Mutations delete a step outright: control falls through to the
        // next one without consuming a scheduler step.
        loop {
            match ctx.pc {
                1 if self.skip(Mutation::RegSkipToggleClear) => ctx.pc = 2,
                4 if self.skip(Mutation::RegSkipCp1) => ctx.pc = 5,
                pc if (7..7 + self.n).contains(&pc) && self.skip(Mutation::RegSkipToggleSet) => {
                    ctx.pc = 7 + self.n
                }
                _ => break,
            }
        }
        match ctx.pc {
            0 => {
                let snap = env.read(&CellId::scalar(R))?;
                ctx.set_local(L_SNAP, snap);
                ctx.pc = 1;
            }
            1 => {
                let snap = ctx.local(L_SNAP).as_tuple();
                let (q, qtoggle) = (snap[1].as_pid(), snap[2].as_int());
                env.write(
                    &CellId::indexed(A, [p, q, 1 - qtoggle as usize]),
                    CellValue::Bool(false),
                )?;
                ctx.pc = 2;
            }
            2 => {
                // Two accesses to the process's own private cells in one
                // step: read the toggle index, persist the recovery data.
                let mtoggle = env.read(&CellId::private(T, p))?;
                let snap = ctx.local(L_SNAP).as_tuple().to_vec();
                let mut rd = vec![mtoggle.clone()];
                rd.extend(snap);
                env.write(&CellId::private(RD, p), CellValue::Tuple(rd))?;
                ctx.set_local(L_MTOGGLE, mtoggle);
                ctx.pc = 3;
            }
            3 => {
                let now = env.read(&CellId::scalar(R))?;
                // Overwritten since the snapshot: skip straight to the
                // checkpoint-2 write, someone else's write linearizes ours.
                ctx.pc = if &now == ctx.local(L_SNAP) { 4 } else { 6 };
            }
            4 => {
                env.write(&ann_cp(p), CellValue::Int(1))?;
                ctx.pc = 5;
            }
            5 => {
                let mtoggle = ctx.local(L_MTOGGLE).as_int();
                env.write(&CellId::scalar(R), triple(val, p, mtoggle))?;
                ctx.pc = 6;
            }
            6 => {
                env.write(&ann_cp(p), CellValue::Int(2))?;
                ctx.pc = 7;
            }
            pc if (7..7 + self.n).contains(&pc) => {
                let i = pc - 7;
                let mtoggle = ctx.local(L_MTOGGLE).as_int();
                env.write(
                    &CellId::indexed(A, [i, p, mtoggle as usize]),
                    CellValue::Bool(true),
                )?;
                ctx.pc = pc + 1;
            }
            pc if pc == 7 + self.n => {
                let mtoggle = ctx.local(L_MTOGGLE).as_int();
                env.write(&CellId::private(T, p), CellValue::Int(1 - mtoggle))?;
                env.write(&ann_resp(p), Response::Ack.to_cell())?;
                return Ok(StepOutcome::Return(Response::Ack));
            }
            pc => panic!("write machine: invalid pc {pc}"),
        }
        Ok(StepOutcome::Continue)
    }

    fn write_recover_step(
        &self,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        let p = ctx.pid;
        loop {
            match ctx.pc {
                pc if (6..6 + self.n).contains(&pc) && self.skip(Mutation::RegSkipToggleSet) => {
                    ctx.pc = 6 + self.n
                }
                _ => break,
            }
        }
        match ctx.pc {
            0 => {
                let rd = env.read(&CellId::private(RD, p))?;
                ctx.set_local(L_SNAP, rd);
                ctx.pc = 1;
            }
            1 => {
                let resp = env.read(&ann_resp(p))?;
                if let Some(r) = Response::from_cell(&resp) {
                    return Ok(StepOutcome::Return(r));
                }
                ctx.pc = 2;
            }
            2 => {
                let cp = env.read(&ann_cp(p))?.as_int();
                match cp {
                    0 => return Ok(StepOutcome::Return(Response::Fail)),
                    1 => ctx.pc = 3,
                    _ => ctx.pc = 5,
                }
            }
            3 => {
                let rd = ctx.local(L_SNAP).as_tuple().to_vec();
                let snapshot = CellValue::Tuple(rd[1..].to_vec());
                let now = env.read(&CellId::scalar(R))?;
                ctx.pc = if now == snapshot { 4 } else { 5 };
            }
            4 => {
                let rd = ctx.local(L_SNAP).as_tuple();
                let (q, qtoggle) = (rd[2].as_pid(), rd[3].as_int());
                let bit = env.read(&CellId::indexed(A, [p, q, 1 - qtoggle as usize]))?;
                if !bit.as_bool() {
                    // R still shows the snapshot and the writer never reused
                    // its other toggle row: nothing was written after the
                    // snapshot, so the interrupted write was not linearized.
                    return Ok(StepOutcome::Return(Response::Fail));
                }
                ctx.pc = 5;
            }
            5 => {
                env.write(&ann_cp(p), CellValue::Int(2))?;
                ctx.pc = 6;
            }
            pc if (6..6 + self.n).contains(&pc) => {
                let i = pc - 6;
                let mtoggle = ctx.local(L_SNAP).as_tuple()[0].as_int();
                env.write(
                    &CellId::indexed(A, [i, p, mtoggle as usize]),
                    CellValue::Bool(true),
                )?;
                ctx.pc = pc + 1;
            }
            pc if pc == 6 + self.n => {
                let mtoggle = ctx.local(L_SNAP).as_tuple()[0].as_int();
                env.write(&CellId::private(T, p), CellValue::Int(1 - mtoggle))?;
                env.write(&ann_resp(p), Response::Ack.to_cell())?;
                return Ok(StepOutcome::Return(Response::Ack));
            }
            pc => panic!("write recovery machine: invalid pc {pc}"),
        }
        Ok(StepOutcome::Continue)
    }

    fn read_step(
        &self,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        let p = ctx.pid;
        match ctx.pc {
            0 => {
                let r = env.read(&CellId::scalar(R))?;
                ctx.set_local(L_VAL, r.as_tuple()[0].clone());
                ctx.pc = 1;
                Ok(StepOutcome::Continue)
            }
            1 => {
                let v = ctx.local(L_VAL).as_int();
                env.write(&ann_resp(p), Response::Val(v).to_cell())?;
                Ok(StepOutcome::Return(Response::Val(v)))
            }
            pc => panic!("read machine: invalid pc {pc}"),
        }
    }

    fn read_recover_step(
        &self,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        match ctx.pc {
            0 => {
                let resp = env.read(&ann_resp(ctx.pid))?;
                if let Some(r) = Response::from_cell(&resp) {
                    return Ok(StepOutcome::Return(r));
                }
                ctx.pc = 1;
                Ok(StepOutcome::Continue)
            }
            _ => {
                // Re-invoke: the read machine, shifted by one pc.
                ctx.pc -= 1;
                let out = self.read_step(ctx, env);
                ctx.pc += 1;
                out
            }
        }
    }
}

impl Algorithm for RegDetect {
    fn kind(&self) -> ObjectKind {
        ObjectKind::RegDetect
    }

    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn initial_memory(&self) -> MemoryImage {
        let mut mem = self.layout.initial_memory();
        if !self.reuse_initial_toggle && self.n > 0 {
            // The initial image counts as a completed toggle-0 write by
            // process 0, so that process's next write must use row 1.
            mem.harness_write(&CellId::private(T, 0), CellValue::Int(1))
                .expect("layout always declares T");
        }
        mem
    }

    fn accepts(&self, desc: &OpDescriptor) -> bool {
        matches!(desc, OpDescriptor::Read | OpDescriptor::Write(_))
    }

    fn op_step(
        &self,
        desc: &OpDescriptor,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        match desc {
            OpDescriptor::Write(val) => self.write_step(*val, ctx, env),
            OpDescriptor::Read => self.read_step(ctx, env),
            other => Err(NvmError::ModelViolation(format!(
                "reg-detect does not implement {other}"
            ))),
        }
    }

    fn recover_step(
        &self,
        desc: &OpDescriptor,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        match desc {
            OpDescriptor::Write(_) => self.write_recover_step(ctx, env),
            OpDescriptor::Read => self.read_recover_step(ctx, env),
            other => Err(NvmError::ModelViolation(format!(
                "reg-detect does not implement {other}"
            ))),
        }
    }

    fn step_bound(&self) -> Option<usize> {
        Some(8 + self.n)
    }
}
