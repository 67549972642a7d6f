//! Regression suite: algorithm defects the harness surfaced (kept
//! reproducible on purpose), plus audits of the model invariants the
//! modules promise.

use detectable_core::checker::{check_history, CheckMode, Verdict, DEFAULT_WORK_CAP};
use detectable_core::explore::{exhaustive, explore_scripts, ExploreBounds};
use detectable_core::history::EventKind;
use detectable_core::nvm::{AccessKind, CellId};
use detectable_core::objects::{ObjectConfig, ObjectKind};
use detectable_core::schedule::Directive;
use detectable_core::system::{run_schedule, CallerPolicy, System, SystemConfig};
use detectable_core::value::{OpDescriptor, Response};

/// Reusing toggle array 0 for process 0's first write contradicts the
/// attribution of the initial register image to a completed toggle-0 write
/// by that process, and the checker catches the resulting bad `fail`:
/// process 1's write gets observed by a read, then process 0 restores the
/// exact initial triple with one write, and process 1's recovery wrongly
/// concludes its write never happened.
#[test]
fn reusing_initial_toggle_breaks_detectability() {
    let mut object = ObjectConfig::new(ObjectKind::RegDetect, 2);
    object.reuse_initial_toggle = true;
    let cfg = SystemConfig::new(object);
    let bounds = ExploreBounds {
        stop_at_first_violation: true,
        ..Default::default()
    };
    let report = exhaustive(&cfg, &bounds).unwrap();
    assert!(
        report.violations > 0,
        "the flawed initialization must be caught"
    );
    let cex = report.first_counterexample.unwrap();
    // The counterexample replays to the identical history and verdict.
    let outcome = run_schedule(&cfg, &cex.schedule, None).unwrap();
    assert_eq!(outcome.history, cex.history);
    let verdict = check_history(
        &outcome.history,
        cfg.object.seq_spec(),
        CheckMode::Detectable,
        DEFAULT_WORK_CAP,
    )
    .unwrap();
    assert_eq!(verdict.verdict, Verdict::Fail);

    // The repaired initialization passes the same sweep (the full run is
    // acceptance criterion 1; one targeted script combination here).
    let repaired = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    let report = explore_scripts(
        &repaired,
        cex.schedule.scripts.clone(),
        &ExploreBounds::default(),
    )
    .unwrap();
    assert_eq!(report.violations, 0);
}

/// The explicit counterexample from the analysis, step by step: the
/// recovery condition reads the initial triple back and the toggle bit
/// stays clear, so the linearized write is reported failed.
#[test]
fn reusing_initial_toggle_explicit_trace() {
    let mut object = ObjectConfig::new(ObjectKind::RegDetect, 2);
    object.reuse_initial_toggle = true;
    let cfg = SystemConfig::new(object);
    let mut sys = System::new(
        &cfg,
        vec![
            vec![OpDescriptor::Read, OpDescriptor::Write(0)],
            vec![OpDescriptor::Write(1)],
        ],
    )
    .unwrap();
    // p1 drives its write through R := <1,1,0> (announce + 6 steps).
    for _ in 0..7 {
        sys.apply(Directive::Step(1)).unwrap();
    }
    sys.apply(Directive::Crash).unwrap();
    // p0 observes the written value...
    let read_resp = drive(&mut sys, 0);
    assert_eq!(read_resp, Response::Val(1));
    // ...then writes 0, restoring the exact initial triple <0,0,0>.
    let write_resp = drive(&mut sys, 0);
    assert_eq!(write_resp, Response::Ack);
    let r = sys.mem.harness_read(&CellId::scalar("R")).unwrap();
    assert_eq!(
        r.as_tuple()
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>(),
        vec!["0", "p0", "0"]
    );
    // p1's recovery now wrongly fails, though its write was observed.
    let recover_resp = drive(&mut sys, 1);
    assert_eq!(recover_resp, Response::Fail);
    let verdict = check_history(
        &sys.history,
        cfg.object.seq_spec(),
        CheckMode::Detectable,
        DEFAULT_WORK_CAP,
    )
    .unwrap();
    assert_eq!(verdict.verdict, Verdict::Fail);

    // With the repaired initialization the same schedule is consistent:
    // process 0's write uses the other toggle array, R ends <0,0,1>, and
    // the recovery correctly acknowledges.
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    let mut sys = System::new(
        &cfg,
        vec![
            vec![OpDescriptor::Read, OpDescriptor::Write(0)],
            vec![OpDescriptor::Write(1)],
        ],
    )
    .unwrap();
    for _ in 0..7 {
        sys.apply(Directive::Step(1)).unwrap();
    }
    sys.apply(Directive::Crash).unwrap();
    drive(&mut sys, 0);
    drive(&mut sys, 0);
    let recover_resp = drive(&mut sys, 1);
    assert_eq!(recover_resp, Response::Ack);
    let verdict = check_history(
        &sys.history,
        cfg.object.seq_spec(),
        CheckMode::Detectable,
        DEFAULT_WORK_CAP,
    )
    .unwrap();
    assert_eq!(verdict.verdict, Verdict::Pass);
}

/// Same-value CAS is outside the supported alphabet: a successful cas(0,0)
/// flips only the tag vector, making a concurrent cas(0,0) fail its
/// hardware CAS and answer false while the value is still 0 — which no
/// linearization explains. The harness reports it; the operation stays out
/// of the verification alphabet.
#[test]
fn same_value_cas_race_is_not_linearizable() {
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::CasDetect, 2));
    assert!(
        !cfg.object
            .alphabet()
            .contains(&OpDescriptor::Cas { old: 0, new: 0 }),
        "same-value CAS must stay out of the verification alphabet"
    );
    let bounds = ExploreBounds {
        stop_at_first_violation: true,
        ..Default::default()
    };
    let scripts = vec![
        vec![OpDescriptor::Cas { old: 0, new: 0 }],
        vec![OpDescriptor::Cas { old: 0, new: 0 }],
    ];
    let report = explore_scripts(&cfg, scripts, &bounds).unwrap();
    assert!(
        report.violations > 0,
        "racing same-value CAS operations must violate linearizability"
    );
    let cex = report.first_counterexample.unwrap();
    assert_eq!(cex.durable, Verdict::Fail);
}

fn drive(sys: &mut System, pid: usize) -> Response {
    loop {
        let d = if sys.can_recover(pid) {
            Directive::RecoverStep(pid)
        } else {
            Directive::Step(pid)
        };
        if let Some(ev) = sys.apply(d).unwrap() {
            if matches!(ev.kind, EventKind::Respond | EventKind::RecoverRespond) {
                return ev.value.unwrap();
            }
        }
    }
}

/// The retry policy re-announces a failed operation as a fresh invocation,
/// which then completes.
#[test]
fn retry_policy_reattempts_failed_operation() {
    let mut cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    cfg.caller_policy = CallerPolicy::Retry(1);
    let mut sys = System::new(&cfg, vec![vec![OpDescriptor::Write(1)], vec![]]).unwrap();
    // Crash before the checkpoint: recovery fails, the caller retries.
    for _ in 0..3 {
        sys.apply(Directive::Step(0)).unwrap();
    }
    sys.apply(Directive::Crash).unwrap();
    let first = drive(&mut sys, 0);
    assert_eq!(first, Response::Fail);
    assert!(!sys.is_terminal(), "a retry must be pending");
    let second = drive(&mut sys, 0);
    assert_eq!(second, Response::Ack);
    assert!(sys.is_terminal());
    // Two distinct instances of the same descriptor in the history.
    let invokes: Vec<_> = sys
        .history
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Invoke)
        .collect();
    assert_eq!(invokes.len(), 2);
    assert_ne!(invokes[0].instance, invokes[1].instance);
    // And the history linearizes: the failed instance excluded, the retried
    // one included.
    let verdict = check_history(
        &sys.history,
        cfg.object.seq_spec(),
        CheckMode::Detectable,
        DEFAULT_WORK_CAP,
    )
    .unwrap();
    assert_eq!(verdict.verdict, Verdict::Pass);
}

/// The tag bit `vec[p]` changes exactly at p's successful CAS steps.
#[test]
fn cas_vec_bit_flip_discipline() {
    let mut cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::CasDetect, 2));
    cfg.record_accesses = true;
    let mut sys = System::new(
        &cfg,
        vec![
            vec![
                OpDescriptor::Cas { old: 0, new: 1 },
                OpDescriptor::Cas { old: 0, new: 2 },
            ],
            vec![OpDescriptor::Cas { old: 1, new: 0 }],
        ],
    )
    .unwrap();
    for pid in [0, 1, 0] {
        drive(&mut sys, pid);
    }
    // Reconstruct vec[p] transitions from the access trace.
    let mut vec_state = vec![false; 2];
    for rec in &sys.accesses {
        if rec.cell == CellId::scalar("C") {
            if let AccessKind::Cas { success } = rec.kind {
                if success {
                    let new_vec = rec.value.as_tuple()[1].as_tuple().to_vec();
                    for p in 0..2 {
                        let flipped = new_vec[p].as_bool() != vec_state[p];
                        assert_eq!(
                            flipped,
                            p == rec.pid,
                            "vec[{p}] may flip only on p{p}'s successful CAS"
                        );
                    }
                    vec_state = new_vec.iter().map(|b| b.as_bool()).collect();
                }
            }
        }
    }
}

/// Between any two R-writes by the same process with the same toggle index
/// there is a completed write by that process with the other index. The
/// initial image counts as a completed toggle-0 write by process 0.
#[test]
fn register_toggle_alternation_audit() {
    let mut cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    cfg.record_accesses = true;
    let mut sys = System::new(
        &cfg,
        vec![
            vec![OpDescriptor::Write(1), OpDescriptor::Write(2)],
            vec![OpDescriptor::Write(0), OpDescriptor::Write(1)],
        ],
    )
    .unwrap();
    for pid in [0, 1, 0, 1] {
        drive(&mut sys, pid);
    }
    let mut last_toggle: Vec<Option<i64>> = vec![Some(0), None]; // attribution
    for rec in &sys.accesses {
        if rec.cell == CellId::scalar("R") && rec.kind == AccessKind::Write {
            let f = rec.value.as_tuple();
            let (writer, toggle) = (f[1].as_pid(), f[2].as_int());
            if let Some(prev) = last_toggle[writer] {
                assert_ne!(
                    prev, toggle,
                    "p{writer} reused toggle index {toggle} without an \
                     intervening opposite-toggle write"
                );
            }
            last_toggle[writer] = Some(toggle);
        }
    }
}

/// The max register's write machine never touches any cell other than its
/// own MR entry: no checkpoint state, no announcement reads.
#[test]
fn maxreg_uses_no_auxiliary_cells() {
    let mut cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::MaxReg, 2));
    cfg.record_accesses = true;
    let mut sys = System::new(
        &cfg,
        vec![
            vec![OpDescriptor::WriteMax(1), OpDescriptor::WriteMax(2)],
            vec![OpDescriptor::WriteMax(1)],
        ],
    )
    .unwrap();
    // Include a crash so recovery steps are audited too.
    sys.apply(Directive::Step(0)).unwrap();
    sys.apply(Directive::Step(0)).unwrap();
    sys.apply(Directive::Crash).unwrap();
    for pid in [0, 1, 0] {
        drive(&mut sys, pid);
    }
    for rec in &sys.accesses {
        assert_eq!(
            rec.cell.name, "MR",
            "write-max touched {} — it must only access MR",
            rec.cell
        );
    }
}

/// Monotonicity: MR entries never decrease, across crashes included.
#[test]
fn maxreg_entries_never_decrease() {
    let mut cfg =
        SystemConfig::new(ObjectConfig::new(ObjectKind::MaxReg, 2).with_domain(vec![0, 1, 2, 3]));
    cfg.record_accesses = true;
    let mut sys = System::new(
        &cfg,
        vec![
            vec![OpDescriptor::WriteMax(3), OpDescriptor::WriteMax(1)],
            vec![OpDescriptor::WriteMax(2), OpDescriptor::Read],
        ],
    )
    .unwrap();
    sys.apply(Directive::Step(1)).unwrap();
    sys.apply(Directive::Step(1)).unwrap();
    sys.apply(Directive::Crash).unwrap();
    for pid in [0, 1, 0, 1] {
        drive(&mut sys, pid);
    }
    let mut highest = [i64::MIN; 2];
    for rec in &sys.accesses {
        if rec.cell.name == "MR" && rec.kind == AccessKind::Write {
            let slot = rec.cell.index()[0];
            let v = rec.value.as_int();
            assert!(v >= highest[slot], "MR[{slot}] decreased to {v}");
            highest[slot] = v;
        }
    }
}

/// The starvation schedule: a writer that keeps raising its entry keeps the
/// reader's double collect unstable; the run ends as budget-exhausted, not
/// as a violation.
#[test]
fn maxreg_collect_starvation_is_budget_exhausted() {
    let domain: Vec<i64> = (0..=12).collect();
    let cfg =
        SystemConfig::new(ObjectConfig::new(ObjectKind::MaxReg, 2).with_domain(domain.clone()));
    let writer_script: Vec<OpDescriptor> = (1..=12).map(OpDescriptor::WriteMax).collect();
    let mut directives = vec![Directive::Step(0)]; // reader announces
    for _ in 0..12 {
        // One full write by p1 (announce, read own entry, write it higher),
        // then a single reader step: every comparison round sees fresh data.
        directives.extend([
            Directive::Step(1),
            Directive::Step(1),
            Directive::Step(1),
            Directive::Step(0),
        ]);
    }
    let schedule = detectable_core::schedule::Schedule::new(
        vec![vec![OpDescriptor::Read], writer_script],
        directives,
    );
    let outcome = run_schedule(&cfg, &schedule, Some(40)).unwrap();
    assert!(outcome.budget_exhausted);
    assert!(!outcome.completed);
    // The reader never responded.
    assert!(!outcome
        .history
        .events
        .iter()
        .any(|e| e.kind == EventKind::Respond && e.pid == Some(0)));
    // Both checkers accept the truncated history: the pending read is
    // unconstrained.
    for mode in [CheckMode::Durable, CheckMode::Detectable] {
        let verdict = check_history(
            &outcome.history,
            cfg.object.seq_spec(),
            mode,
            DEFAULT_WORK_CAP,
        )
        .unwrap();
        assert_eq!(verdict.verdict, Verdict::Pass);
    }
}

/// Announce discipline plus crash persistence, exercised via a regular run:
/// memory images before and after every crash are structurally identical.
#[test]
fn crash_persistence_across_schedule() {
    let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
    let mut sys = System::new(
        &cfg,
        vec![vec![OpDescriptor::Write(1)], vec![OpDescriptor::Write(2)]],
    )
    .unwrap();
    sys.apply(Directive::Step(0)).unwrap();
    sys.apply(Directive::Step(1)).unwrap();
    sys.apply(Directive::Step(0)).unwrap();
    let before = sys.mem.clone();
    sys.apply(Directive::Crash).unwrap();
    assert_eq!(sys.mem, before);
    // Volatile contexts all reset.
    for ctx in &sys.procs {
        assert_eq!(ctx.pc, 0);
        assert!(ctx.locals.is_empty());
    }
}
