//! Bounded-space detectable CAS object.
//!
//! The object state is one CAS-capable cell `C` holding `<val, vec>` where
//! `vec` is an N-bit vector. A successful CAS by process `p` installs the
//! new value and flips `vec[p]` in the same atomic step, and `p` is the only
//! process that ever changes `vec[p]`. Before attempting the CAS, `p`
//! persists the flipped bit into its private `RD` cell; recovery then reads
//! back `vec[p]` and concludes the CAS succeeded exactly when the bit in `C`
//! matches the persisted one.

use super::{
    ann_cp, ann_resp, announcement_decls, Algorithm, Mutation, ObjectConfig, ObjectKind, StepEnv,
    StepOutcome,
};
use crate::nvm::{CellDecl, CellId, Layout, MemoryImage, NvmError};
use crate::process::ProcessContext;
use crate::value::{CellValue, OpDescriptor, Response};
use std::sync::Arc;

const C: &str = "C";
const RD: &str = "RD";

const L_SNAP: usize = 0; // <val, vec> read from C
const L_VAL: usize = 1; // read machine: extracted value

fn pair(val: i64, vec: Vec<CellValue>) -> CellValue {
    CellValue::Tuple(vec![CellValue::Int(val), CellValue::Tuple(vec)])
}

pub struct CasDetect {
    layout: Arc<Layout>,
    mutation: Option<Mutation>,
}

impl CasDetect {
    pub fn new(cfg: &ObjectConfig, mutation: Option<Mutation>) -> Self {
        let shared = vec![CellDecl {
            name: C,
            dims: vec![],
            init: pair(cfg.v_init, vec![CellValue::Bool(false); cfg.n]),
            cas_capable: true,
            bits_per_cell: cfg.value_bits + cfg.n as u64,
        }];
        let mut private = vec![CellDecl {
            name: RD,
            dims: vec![],
            init: CellValue::Bottom,
            cas_capable: false,
            bits_per_cell: 0,
        }];
        private.extend(announcement_decls());
        CasDetect {
            layout: Arc::new(Layout::new(cfg.n, shared, private)),
            mutation,
        }
    }

    fn skip(&self, m: Mutation) -> bool {
        self.mutation == Some(m)
    }

    fn cas_step(
        &self,
        old: i64,
        new: i64,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        let p = ctx.pid;
        loop {
            match ctx.pc {
                2 if self.skip(Mutation::CasSkipRdPersist) => ctx.pc = 3,
                3 if self.skip(Mutation::CasSkipCp1) => ctx.pc = 4,
                _ => break,
            }
        }
        match ctx.pc {
            0 => {
                let snap = env.read(&CellId::scalar(C))?;
                let val = snap.as_tuple()[0].as_int();
                ctx.set_local(L_SNAP, snap);
                ctx.pc = if val != old { 1 } else { 2 };
            }
            1 => {
                env.write(&ann_resp(p), Response::Bool(false).to_cell())?;
                return Ok(StepOutcome::Return(Response::Bool(false)));
            }
            2 => {
                let vec = ctx.local(L_SNAP).as_tuple()[1].as_tuple();
                let flipped = !vec[p].as_bool();
                env.write(&CellId::private(RD, p), CellValue::Bool(flipped))?;
                ctx.pc = 3;
            }
            3 => {
                env.write(&ann_cp(p), CellValue::Int(1))?;
                ctx.pc = 4;
            }
            4 => {
                let snap = ctx.local(L_SNAP).clone();
                let vec = snap.as_tuple()[1].as_tuple().to_vec();
                let mut newvec = vec;
                newvec[p] = CellValue::Bool(!newvec[p].as_bool());
                let res = env.cas(&CellId::scalar(C), &snap, pair(new, newvec))?;
                ctx.set_local(L_VAL, CellValue::Bool(res));
                ctx.pc = 5;
            }
            5 => {
                let res = ctx.local(L_VAL).as_bool();
                env.write(&ann_resp(p), Response::Bool(res).to_cell())?;
                return Ok(StepOutcome::Return(Response::Bool(res)));
            }
            pc => panic!("cas machine: invalid pc {pc}"),
        }
        Ok(StepOutcome::Continue)
    }

    fn cas_recover_step(
        &self,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        let p = ctx.pid;
        match ctx.pc {
            0 => {
                let resp = env.read(&ann_resp(p))?;
                if let Some(r) = Response::from_cell(&resp) {
                    return Ok(StepOutcome::Return(r));
                }
                ctx.pc = 1;
            }
            1 => {
                let cp = env.read(&ann_cp(p))?.as_int();
                if cp == 0 {
                    return Ok(StepOutcome::Return(Response::Fail));
                }
                ctx.pc = 2;
            }
            2 => {
                let snap = env.read(&CellId::scalar(C))?;
                ctx.set_local(L_SNAP, snap);
                ctx.pc = 3;
            }
            3 => {
                let bit = ctx.local(L_SNAP).as_tuple()[1].as_tuple()[p].clone();
                let rd = env.read(&CellId::private(RD, p))?;
                if bit != rd {
                    // CAS failed or never executed; either way nothing this
                    // operation did is visible to anyone.
                    return Ok(StepOutcome::Return(Response::Fail));
                }
                ctx.pc = 4;
            }
            4 => {
                env.write(&ann_resp(p), Response::Bool(true).to_cell())?;
                return Ok(StepOutcome::Return(Response::Bool(true)));
            }
            pc => panic!("cas recovery machine: invalid pc {pc}"),
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
                let c = env.read(&CellId::scalar(C))?;
                ctx.set_local(L_VAL, c.as_tuple()[0].clone());
                ctx.pc = 1;
                Ok(StepOutcome::Continue)
            }
            1 => {
                let v = ctx.local(L_VAL).as_int();
                env.write(&ann_resp(p), Response::Val(v).to_cell())?;
                Ok(StepOutcome::Return(Response::Val(v)))
            }
            pc => panic!("cas read machine: invalid pc {pc}"),
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
                ctx.pc -= 1;
                let out = self.read_step(ctx, env);
                ctx.pc += 1;
                out
            }
        }
    }
}

impl Algorithm for CasDetect {
    fn kind(&self) -> ObjectKind {
        ObjectKind::CasDetect
    }

    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn initial_memory(&self) -> MemoryImage {
        self.layout.initial_memory()
    }

    fn accepts(&self, desc: &OpDescriptor) -> bool {
        matches!(desc, OpDescriptor::Read | OpDescriptor::Cas { .. })
    }

    fn op_step(
        &self,
        desc: &OpDescriptor,
        ctx: &mut ProcessContext,
        env: &mut StepEnv,
    ) -> Result<StepOutcome, NvmError> {
        match desc {
            OpDescriptor::Cas { old, new } => self.cas_step(*old, *new, ctx, env),
            OpDescriptor::Read => self.read_step(ctx, env),
            other => Err(NvmError::ModelViolation(format!(
                "cas-detect does not implement {other}"
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
            OpDescriptor::Cas { .. } => self.cas_recover_step(ctx, env),
            OpDescriptor::Read => self.read_recover_step(ctx, env),
            other => Err(NvmError::ModelViolation(format!(
                "cas-detect does not implement {other}"
            ))),
        }
    }

    fn step_bound(&self) -> Option<usize> {
        Some(7)
    }
}
