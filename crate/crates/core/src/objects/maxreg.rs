//! Detectable max register.
//!
//! One integer cell per process, each written only by its owner and never
//! decreased. A write updates the owner's cell if the new value is larger;
//! a read repeatedly copies the whole array until two consecutive collects
//! agree, then returns the largest entry. Recovery simply re-invokes the
//! interrupted operation (returning the persisted response for reads that
//! already finished), so the algorithm itself never touches the
//! announcement cells' checkpoint field.
//!
//! The collect loop is lock-free but not wait-free: a writer that keeps
//! raising its cell can starve a concurrent read forever, so runs of this
//! object carry a step budget.

use super::{
    ann_resp, announcement_decls, Algorithm, Mutation, ObjectConfig, ObjectKind, StepEnv,
    StepOutcome,
};
use crate::nvm::{CellDecl, CellId, Layout, MemoryImage, NvmError};
use crate::process::ProcessContext;
use crate::value::{CellValue, OpDescriptor, Response};
use std::sync::Arc;

const MR: &str = "MR";

const L_COLLECT: usize = 0; // the local copy being compared/filled

pub struct MaxReg {
    n: usize,
    layout: Arc<Layout>,
}

impl MaxReg {
    pub fn new(cfg: &ObjectConfig, _mutation: Option<Mutation>) -> Self {
        let shared = vec![CellDecl {
            name: MR,
            dims: vec![cfg.n],
            init: CellValue::Int(0),
            cas_capable: false,
            bits_per_cell: cfg.value_bits,
        }];
        MaxReg {
            n: cfg.n,
            layout: Arc::new(Layout::new(cfg.n, shared, announcement_decls())),
        }
    }

    fn write_max_step(
        &self,
        val: i64,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        let p = ctx.pid;
        match ctx.pc {
            0 => {
                let cur = env.read(&CellId::indexed(MR, [p]))?.as_int();
                if cur >= val {
                    return Ok(StepOutcome::Return(Response::Ack));
                }
                ctx.pc = 1;
                Ok(StepOutcome::Continue)
            }
            1 => {
                env.write(&CellId::indexed(MR, [p]), CellValue::Int(val))?;
                Ok(StepOutcome::Return(Response::Ack))
            }
            pc => panic!("writemax machine: invalid pc {pc}"),
        }
    }

    /// The double collect. Program counters `0..n` compare entry `pc`
    /// against the local copy; on a mismatch the machine re-copies the whole
    /// array one entry per step (`n..2n`) and starts a fresh comparison.
    /// `2n` persists and returns the maximum of the agreed copy.
    fn read_step(
        &self,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        let n = self.n;
        if ctx.locals.is_empty() {
            ctx.set_local(L_COLLECT, CellValue::Tuple(vec![CellValue::Int(0); n]));
        }
        match ctx.pc {
            pc if pc < n => {
                let live = env.read(&CellId::indexed(MR, [pc]))?;
                let mine = ctx.local(L_COLLECT).as_tuple()[pc].clone();
                if live == mine {
                    ctx.pc = if pc + 1 == n { 2 * n } else { pc + 1 };
                } else {
                    ctx.pc = n;
                }
            }
            pc if pc < 2 * n => {
                let i = pc - n;
                let live = env.read(&CellId::indexed(MR, [i]))?;
                let mut copy = ctx.local(L_COLLECT).as_tuple().to_vec();
                copy[i] = live;
                ctx.set_local(L_COLLECT, CellValue::Tuple(copy));
                ctx.pc = if pc + 1 == 2 * n { 0 } else { pc + 1 };
            }
            pc if pc == 2 * n => {
                let max = ctx
                    .local(L_COLLECT)
                    .as_tuple()
                    .iter()
                    .map(|v| v.as_int())
                    .max()
                    .unwrap_or(0);
                env.write(&ann_resp(ctx.pid), Response::Val(max).to_cell())?;
                return Ok(StepOutcome::Return(Response::Val(max)));
            }
            pc => panic!("maxreg read machine: invalid pc {pc}"),
        }
        Ok(StepOutcome::Continue)
    }

    fn read_recover_step(
        &self,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        match ctx.pc {
            0 if ctx.locals.is_empty() => {
                let resp = env.read(&ann_resp(ctx.pid))?;
                if let Some(r) = Response::from_cell(&resp) {
                    return Ok(StepOutcome::Return(r));
                }
                // Mark the response check done, then re-invoke from scratch.
                ctx.set_local(L_COLLECT, CellValue::Tuple(vec![CellValue::Int(0); self.n]));
                Ok(StepOutcome::Continue)
            }
            _ => self.read_step(ctx, env),
        }
    }
}

impl Algorithm for MaxReg {
    fn kind(&self) -> ObjectKind {
        ObjectKind::MaxReg
    }

    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn initial_memory(&self) -> MemoryImage {
        self.layout.initial_memory()
    }

    fn accepts(&self, desc: &OpDescriptor) -> bool {
        matches!(desc, OpDescriptor::Read | OpDescriptor::WriteMax(_))
    }

    fn op_step(
        &self,
        desc: &OpDescriptor,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        match desc {
            OpDescriptor::WriteMax(val) => self.write_max_step(*val, ctx, env),
            OpDescriptor::Read => self.read_step(ctx, env),
            other => Err(NvmError::ModelViolation(format!(
                "maxreg does not implement {other}"
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
            // Re-invoking a maximum write is idempotent.
            OpDescriptor::WriteMax(val) => self.write_max_step(*val, ctx, env),
            OpDescriptor::Read => self.read_recover_step(ctx, env),
            other => Err(NvmError::ModelViolation(format!(
                "maxreg does not implement {other}"
            ))),
        }
    }

    fn step_bound(&self) -> Option<usize> {
        None
    }
}
