//! Independent oracles for the step machines.
//!
//! The interpreter below executes the register and CAS algorithms as plain
//! straight-line code over a naive state struct, with no step machinery, no
//! scheduler, and no crash model. Solo uncrashed runs of the real machines
//! must agree with it exactly: same responses, same final memory.

use detectable_core::history::EventKind;
use detectable_core::nvm::CellId;
use detectable_core::objects::{ObjectConfig, ObjectKind};
use detectable_core::schedule::Directive;
use detectable_core::system::{System, SystemConfig};
use detectable_core::value::{CellValue, OpDescriptor, Response};

// ---------------------------------------------------------------------------
// The oracle: direct interpretation of the pseudocode, solo runs only.

#[derive(Debug, Clone, PartialEq)]
struct RegModel {
    n: usize,
    r: (i64, usize, i64),
    a: Vec<Vec<[bool; 2]>>, // a[reader][writer][toggle]
    t: Vec<i64>,
}

impl RegModel {
    fn new(n: usize, v_init: i64) -> Self {
        let mut t = vec![0i64; n];
        // Initial value attributed to a completed toggle-0 write by pid 0.
        t[0] = 1;
        RegModel {
            n,
            r: (v_init, 0, 0),
            a: vec![vec![[false; 2]; n]; n],
            t,
        }
    }

    fn write(&mut self, p: usize, val: i64) -> Response {
        let (_, q, qtoggle) = self.r;
        self.a[p][q][1 - qtoggle as usize] = false;
        let mtoggle = self.t[p];
        // rd := <mtoggle, qval, q, qtoggle>; solo, so the re-read matches.
        self.r = (val, p, mtoggle);
        for i in 0..self.n {
            self.a[i][p][mtoggle as usize] = true;
        }
        self.t[p] = 1 - mtoggle;
        Response::Ack
    }

    fn read(&self) -> Response {
        Response::Val(self.r.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CasModel {
    val: i64,
    vec: Vec<bool>,
}

impl CasModel {
    fn new(n: usize, v_init: i64) -> Self {
        CasModel {
            val: v_init,
            vec: vec![false; n],
        }
    }

    fn cas(&mut self, p: usize, old: i64, new: i64) -> Response {
        if self.val != old {
            return Response::Bool(false);
        }
        // Solo: the full-pair CAS cannot fail.
        self.val = new;
        self.vec[p] = !self.vec[p];
        Response::Bool(true)
    }

    fn read(&self) -> Response {
        Response::Val(self.val)
    }
}

// ---------------------------------------------------------------------------
// Driving the real machines solo.

/// Runs each op of `script` solo (to completion, in order) and returns the
/// responses plus the final system.
fn run_solo(
    kind: ObjectKind,
    n: usize,
    pid: usize,
    script: Vec<OpDescriptor>,
) -> (Vec<Response>, System) {
    let cfg = SystemConfig::new(ObjectConfig::new(kind, n));
    let mut scripts = vec![Vec::new(); n];
    scripts[pid] = script;
    let mut sys = System::new(&cfg, scripts).unwrap();
    let mut responses = Vec::new();
    while !sys.is_terminal() {
        if let Some(ev) = sys.apply(Directive::Step(pid)).unwrap() {
            if ev.kind == EventKind::Respond {
                responses.push(ev.value.unwrap());
            }
        }
    }
    (responses, sys)
}

fn reg_cell_r(sys: &System) -> (i64, usize, i64) {
    let r = sys.mem.harness_read(&CellId::scalar("R")).unwrap();
    let f = r.as_tuple();
    (f[0].as_int(), f[1].as_pid(), f[2].as_int())
}

fn reg_cell_a(sys: &System, i: usize, j: usize, k: usize) -> bool {
    sys.mem
        .harness_read(&CellId::indexed("A", [i, j, k]))
        .unwrap()
        .as_bool()
}

fn reg_cell_t(sys: &System, p: usize) -> i64 {
    sys.mem
        .harness_read(&CellId::private("T", p))
        .unwrap()
        .as_int()
}

#[test]
fn solo_write_matches_direct_interpretation() {
    // Fresh object, solo write(1, v1): R=<v1,1,0>, A[*][1][0]=1, T_1 flips.
    let (resps, sys) = run_solo(ObjectKind::RegDetect, 2, 1, vec![OpDescriptor::Write(1)]);
    assert_eq!(resps, vec![Response::Ack]);
    assert_eq!(reg_cell_r(&sys), (1, 1, 0));
    assert!(reg_cell_a(&sys, 0, 1, 0));
    assert!(reg_cell_a(&sys, 1, 1, 0));
    assert_eq!(reg_cell_t(&sys, 1), 1);

    let mut model = RegModel::new(2, 0);
    assert_eq!(model.write(1, 1), Response::Ack);
    assert_eq!(model.r, (1, 1, 0));
    assert!(model.a[0][1][0] && model.a[1][1][0]);
    assert_eq!(model.t[1], 1);
}

#[test]
fn sequential_solo_writes_alternate_toggle_indices() {
    // Two solo writes by process 1 use toggle indices 0 then 1; the oracle
    // interpreter and the step machine agree on every cell.
    let script = vec![OpDescriptor::Write(1), OpDescriptor::Write(2)];
    let (resps, sys) = run_solo(ObjectKind::RegDetect, 2, 1, script.clone());
    assert_eq!(resps, vec![Response::Ack, Response::Ack]);

    let mut model = RegModel::new(2, 0);
    for op in &script {
        if let OpDescriptor::Write(v) = op {
            model.write(1, *v);
        }
    }
    assert_eq!(reg_cell_r(&sys), model.r);
    assert_eq!(reg_cell_r(&sys), (2, 1, 1));
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                assert_eq!(
                    reg_cell_a(&sys, i, j, k),
                    model.a[i][j][k],
                    "A[{i}][{j}][{k}]"
                );
            }
        }
    }
    assert_eq!(reg_cell_t(&sys, 1), model.t[1]);
    assert_eq!(reg_cell_t(&sys, 1), 0);
}

#[test]
fn solo_reads_and_writes_match_oracle_across_processes() {
    let ops = [
        (0usize, OpDescriptor::Write(2)),
        (1, OpDescriptor::Read),
        (1, OpDescriptor::Write(0)),
        (0, OpDescriptor::Read),
        (0, OpDescriptor::Write(1)),
        (1, OpDescriptor::Read),
    ];
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    let mut sys = System::new(
        &cfg,
        vec![
            ops.iter()
                .filter(|(p, _)| *p == 0)
                .map(|(_, o)| *o)
                .collect(),
            ops.iter()
                .filter(|(p, _)| *p == 1)
                .map(|(_, o)| *o)
                .collect(),
        ],
    )
    .unwrap();
    let mut model = RegModel::new(2, 0);
    for (p, op) in ops {
        let expected = match op {
            OpDescriptor::Write(v) => model.write(p, v),
            OpDescriptor::Read => model.read(),
            _ => unreachable!(),
        };
        let got = loop {
            if let Some(ev) = sys.apply(Directive::Step(p)).unwrap() {
                if ev.kind == EventKind::Respond {
                    break ev.value.unwrap();
                }
            }
        };
        assert_eq!(got, expected, "{op} by p{p}");
    }
    assert_eq!(reg_cell_r(&sys), model.r);
}

#[test]
fn solo_cas_matches_direct_interpretation() {
    // Fresh C=<0,(0,0)>, solo cas(0,1) by p0: true, C=<1,(1,0)>.
    let (resps, sys) = run_solo(
        ObjectKind::CasDetect,
        2,
        0,
        vec![OpDescriptor::Cas { old: 0, new: 1 }],
    );
    assert_eq!(resps, vec![Response::Bool(true)]);
    let c = sys.mem.harness_read(&CellId::scalar("C")).unwrap();
    let f = c.as_tuple();
    assert_eq!(f[0].as_int(), 1);
    assert_eq!(
        f[1].as_tuple(),
        &[CellValue::Bool(true), CellValue::Bool(false)]
    );

    let mut model = CasModel::new(2, 0);
    assert_eq!(model.cas(0, 0, 1), Response::Bool(true));
    assert_eq!(model.val, 1);
    assert_eq!(model.vec, vec![true, false]);
}

#[test]
fn cas_mismatch_leaves_cell_untouched() {
    // cas(5, 1) while the value is 0: false without touching C.
    let cfg =
        SystemConfig::new(ObjectConfig::new(ObjectKind::CasDetect, 2).with_domain(vec![0, 1, 5]));
    let mut sys = System::new(
        &cfg,
        vec![vec![OpDescriptor::Cas { old: 5, new: 1 }], vec![]],
    )
    .unwrap();
    let before = sys.mem.clone();
    let mut resp = None;
    while !sys.is_terminal() {
        if let Some(ev) = sys.apply(Directive::Step(0)).unwrap() {
            if ev.kind == EventKind::Respond {
                resp = ev.value;
            }
        }
    }
    assert_eq!(resp, Some(Response::Bool(false)));
    assert!(sys.mem.memory_equivalent(&before));

    let mut model = CasModel::new(2, 0);
    assert_eq!(model.cas(0, 5, 1), Response::Bool(false));
    assert_eq!(model.val, 0);
}

#[test]
fn solo_cas_sequences_match_oracle() {
    let script = vec![
        OpDescriptor::Cas { old: 0, new: 2 },
        OpDescriptor::Cas { old: 0, new: 1 },
        OpDescriptor::Read,
        OpDescriptor::Cas { old: 2, new: 0 },
        OpDescriptor::Read,
    ];
    let (resps, _) = run_solo(ObjectKind::CasDetect, 2, 0, script.clone());
    let mut model = CasModel::new(2, 0);
    let expected: Vec<Response> = script
        .iter()
        .map(|op| match op {
            OpDescriptor::Cas { old, new } => model.cas(0, *old, *new),
            OpDescriptor::Read => model.read(),
            _ => unreachable!(),
        })
        .collect();
    assert_eq!(resps, expected);
}

#[test]
fn maxreg_solo_semantics() {
    // writemax(5) then writemax(3): the register keeps 5.
    let cfg =
        SystemConfig::new(ObjectConfig::new(ObjectKind::MaxReg, 2).with_domain(vec![0, 3, 5, 7]));
    let mut sys = System::new(
        &cfg,
        vec![
            vec![
                OpDescriptor::WriteMax(5),
                OpDescriptor::WriteMax(3),
                OpDescriptor::Read,
            ],
            vec![OpDescriptor::WriteMax(7), OpDescriptor::Read],
        ],
    )
    .unwrap();
    let mut responses = Vec::new();
    for pid in [0, 0, 0] {
        loop {
            if let Some(ev) = sys.apply(Directive::Step(pid)).unwrap() {
                if ev.kind == EventKind::Respond {
                    responses.push(ev.value.unwrap());
                    break;
                }
            }
        }
    }
    assert_eq!(
        responses,
        vec![Response::Ack, Response::Ack, Response::Val(5)]
    );
    let mr0 = sys.mem.harness_read(&CellId::indexed("MR", [0])).unwrap();
    assert_eq!(mr0, CellValue::Int(5));
    // After p1's writemax(7), a read returns the global maximum.
    for pid in [1, 1] {
        loop {
            if let Some(ev) = sys.apply(Directive::Step(pid)).unwrap() {
                if ev.kind == EventKind::Respond {
                    responses.push(ev.value.unwrap());
                    break;
                }
            }
        }
    }
    assert_eq!(responses[4], Response::Val(7));
}

// ---------------------------------------------------------------------------
// Frozen crash/recovery traces: specific schedules whose outcomes were
// derived by hand-tracing the algorithm, then locked in.

/// Advances `pid` (step or recovery as appropriate) until its in-flight
/// operation resolves; returns the response and how it resolved.
fn drive_to_resolution(sys: &mut System, pid: usize) -> (Response, EventKind) {
    loop {
        let d = if sys.can_recover(pid) {
            Directive::RecoverStep(pid)
        } else {
            Directive::Step(pid)
        };
        if let Some(ev) = sys.apply(d).unwrap() {
            if matches!(ev.kind, EventKind::Respond | EventKind::RecoverRespond) {
                return (ev.value.unwrap(), ev.kind);
            }
        }
    }
}

fn steps(sys: &mut System, pid: usize, count: usize) {
    for _ in 0..count {
        sys.apply(Directive::Step(pid)).unwrap();
    }
}

/// Crash before the first checkpoint write: recovery answers fail and the
/// memory shows no trace of the attempt beyond private recovery data.
#[test]
fn write_crash_before_checkpoint_recovers_fail() {
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    let mut sys = System::new(&cfg, vec![vec![OpDescriptor::Write(1)], vec![]]).unwrap();
    // announce + 4 machine steps: snapshot, toggle clear, recovery-data
    // persist, re-read -- the checkpoint write would be the fifth.
    steps(&mut sys, 0, 5);
    sys.apply(Directive::Crash).unwrap();
    let (resp, kind) = drive_to_resolution(&mut sys, 0);
    assert_eq!(kind, EventKind::RecoverRespond);
    assert_eq!(resp, Response::Fail);
    let fresh = System::new(&cfg, vec![vec![], vec![]]).unwrap();
    assert!(sys.mem.memory_equivalent(&fresh.mem));
}

/// Crash right after the register write (checkpoint still 1): recovery sees
/// R differing from the snapshot and completes with ack.
#[test]
fn write_crash_after_register_write_recovers_ack() {
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    let mut sys = System::new(&cfg, vec![vec![], vec![OpDescriptor::Write(1)]]).unwrap();
    // announce + 6 machine steps end right after R := <1,1,0>.
    steps(&mut sys, 1, 7);
    sys.apply(Directive::Crash).unwrap();
    let (resp, kind) = drive_to_resolution(&mut sys, 1);
    assert_eq!(kind, EventKind::RecoverRespond);
    assert_eq!(resp, Response::Ack);
    let r = sys.mem.harness_read(&CellId::scalar("R")).unwrap();
    assert_eq!(r.as_tuple()[0], CellValue::Int(1));
}

/// Crash at checkpoint 1 with R unchanged and the toggle bit still clear:
/// the write never reached the register, so recovery answers fail.
#[test]
fn write_crash_at_cp1_register_unchanged_recovers_fail() {
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    let mut sys = System::new(&cfg, vec![vec![], vec![OpDescriptor::Write(1)]]).unwrap();
    // announce + 5 machine steps end right after checkpoint := 1.
    steps(&mut sys, 1, 6);
    sys.apply(Directive::Crash).unwrap();
    let (resp, _) = drive_to_resolution(&mut sys, 1);
    assert_eq!(resp, Response::Fail);
}

/// A crashed read re-executes on recovery and returns the current value,
/// which may postdate the crash.
#[test]
fn read_crash_before_response_reexecutes() {
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    let mut sys = System::new(
        &cfg,
        vec![vec![OpDescriptor::Write(2)], vec![OpDescriptor::Read]],
    )
    .unwrap();
    steps(&mut sys, 1, 2); // announce + read R, response not yet persisted
    sys.apply(Directive::Crash).unwrap();
    let (w, _) = drive_to_resolution(&mut sys, 0); // p0 writes 2
    assert_eq!(w, Response::Ack);
    let (resp, kind) = drive_to_resolution(&mut sys, 1);
    assert_eq!(kind, EventKind::RecoverRespond);
    assert_eq!(resp, Response::Val(2));
}

/// A read whose response was persisted before the crash returns it from the
/// announcement slot without re-reading.
#[test]
fn read_recovery_returns_persisted_response() {
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::CasDetect, 2));
    let mut sys = System::new(
        &cfg,
        vec![
            vec![
                OpDescriptor::Cas { old: 0, new: 1 },
                OpDescriptor::Cas { old: 1, new: 2 },
            ],
            vec![OpDescriptor::Read],
        ],
    )
    .unwrap();
    let (c1, _) = drive_to_resolution(&mut sys, 0);
    assert_eq!(c1, Response::Bool(true));
    // p1's read runs to its response persist; p0 starts its second cas and
    // crashes mid-flight so the crash has something to interrupt.
    let (r, _) = drive_to_resolution(&mut sys, 1);
    assert_eq!(r, Response::Val(1));
    steps(&mut sys, 0, 2);
    sys.apply(Directive::Crash).unwrap();
    let (c2, kind) = drive_to_resolution(&mut sys, 0);
    assert_eq!(kind, EventKind::RecoverRespond);
    // Crashed after reading C but before its checkpoint: fail.
    assert_eq!(c2, Response::Fail);
}

/// CAS crash cases frozen from the recovery predicate: before the
/// checkpoint fail; after the checkpoint but before the CAS fail;
/// after a successful CAS true.
#[test]
fn cas_crash_recovery_trichotomy() {
    let run = |steps_before_crash: usize| {
        let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::CasDetect, 2));
        let mut sys = System::new(
            &cfg,
            vec![vec![OpDescriptor::Cas { old: 0, new: 1 }], vec![]],
        )
        .unwrap();
        steps(&mut sys, 0, steps_before_crash);
        sys.apply(Directive::Crash).unwrap();
        drive_to_resolution(&mut sys, 0).0
    };
    // announce + read C + recovery-data persist: checkpoint still 0.
    assert_eq!(run(3), Response::Fail);
    // + checkpoint write: checkpoint 1, CAS not executed.
    assert_eq!(run(4), Response::Fail);
    // + the CAS itself: succeeded, only the response persist was lost.
    assert_eq!(run(5), Response::Bool(true));
}

/// Double crash during recovery: the recovery restarts from scratch and
/// still terminates with the right answer.
#[test]
fn double_crash_during_recovery_terminates() {
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::CasDetect, 2));
    let mut sys = System::new(
        &cfg,
        vec![vec![OpDescriptor::Cas { old: 0, new: 1 }], vec![]],
    )
    .unwrap();
    steps(&mut sys, 0, 5); // through the CAS step
    sys.apply(Directive::Crash).unwrap();
    sys.apply(Directive::RecoverStep(0)).unwrap(); // dispatch
    sys.apply(Directive::RecoverStep(0)).unwrap(); // response-slot read
    sys.apply(Directive::Crash).unwrap();
    let (resp, kind) = drive_to_resolution(&mut sys, 0);
    assert_eq!(kind, EventKind::RecoverRespond);
    assert_eq!(resp, Response::Bool(true));
    assert_eq!(
        sys.history
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Crash)
            .count(),
        2
    );
    assert!(sys.is_terminal());
}
