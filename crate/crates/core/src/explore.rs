//! Exhaustive schedule exploration at desk scale.
//!
//! For every combination of per-process scripts within the bounds, the
//! explorer walks the state graph depth-first: at each state every enabled
//! process step is a branch, and a whole-system crash is a branch whenever
//! the crash budget allows, including in the middle of recoveries. Duplicate
//! states are pruned by exact memoization. The memo key contains the full
//! simulator state *and* the canonical state of both online checkers, so a
//! path is only pruned when its entire checking future is already covered —
//! pruning never hides a violation.
//!
//! Checking is inline: both checkers consume events as they happen, and a
//! branch is reported (and cut) the moment no linearization survives.

use crate::checker::{CheckMode, OnlineChecker};
use crate::history::History;
use crate::objects::{ConfigError, ObjectKind};
use crate::schedule::{Directive, Schedule};
use crate::system::{RunError, System, SystemConfig};
use crate::value::OpDescriptor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreBounds {
    /// Exact script length per process.
    pub ops_per_process: usize,
    pub max_crashes: usize,
    /// State cap per script combination; exceeding it marks the combination
    /// inconclusive rather than silently passing.
    pub max_states: u64,
    /// Checker work cap per history.
    pub work_cap: usize,
    /// Disabled only by tests that count raw interleavings.
    pub memoize: bool,
    /// Stop at the first violation (scanning combinations sequentially so
    /// the result stays deterministic).
    pub stop_at_first_violation: bool,
}

impl Default for ExploreBounds {
    fn default() -> Self {
        ExploreBounds {
            ops_per_process: 2,
            max_crashes: 1,
            max_states: 5_000_000,
            work_cap: crate::checker::DEFAULT_WORK_CAP,
            memoize: true,
            stop_at_first_violation: false,
        }
    }
}

/// A replayable violating run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub schedule: Schedule,
    pub history: History,
    pub durable: crate::checker::Verdict,
    pub detectable: crate::checker::Verdict,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub combos: u64,
    pub states: u64,
    /// Complete terminal histories enumerated (all of them checked inline).
    pub histories: u64,
    pub violations: u64,
    pub inconclusive: u64,
    /// Combinations that hit the state cap.
    pub capped_combos: u64,
    pub max_attempt_steps: usize,
    pub first_counterexample: Option<Counterexample>,
}

impl ExploreReport {
    fn merge(&mut self, other: ExploreReport) {
        self.combos += other.combos;
        self.states += other.states;
        self.histories += other.histories;
        self.violations += other.violations;
        self.inconclusive += other.inconclusive;
        self.capped_combos += other.capped_combos;
        self.max_attempt_steps = self.max_attempt_steps.max(other.max_attempt_steps);
        if self.first_counterexample.is_none() {
            self.first_counterexample = other.first_counterexample;
        }
    }

    pub fn clean(&self) -> bool {
        self.violations == 0 && self.inconclusive == 0 && self.capped_combos == 0
    }
}

/// All script combinations for the bounds: every process runs exactly
/// `ops_per_process` operations drawn from the object's alphabet. For
/// objects whose processes are interchangeable the combinations are deduped
/// up to process renaming.
pub fn script_combos(cfg: &SystemConfig, ops_per_process: usize) -> Vec<Vec<Vec<OpDescriptor>>> {
    let alphabet = cfg.object.alphabet();
    let mut scripts: Vec<Vec<OpDescriptor>> = vec![Vec::new()];
    for _ in 0..ops_per_process {
        scripts = scripts
            .into_iter()
            .flat_map(|s| {
                alphabet.iter().map(move |&op| {
                    let mut s = s.clone();
                    s.push(op);
                    s
                })
            })
            .collect();
    }
    // The register attributes its initial value to process 0, so its
    // processes are not interchangeable; the other objects' are.
    let symmetric = cfg.object.kind != ObjectKind::RegDetect;
    let mut combos: Vec<Vec<Vec<OpDescriptor>>> = vec![Vec::new()];
    for _ in 0..cfg.object.n {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                scripts.iter().map(move |s| {
                    let mut c = c.clone();
                    c.push(s.clone());
                    c
                })
            })
            .collect();
    }
    if symmetric {
        let mut seen = HashSet::new();
        combos.retain(|c| {
            let mut sorted = c.clone();
            sorted.sort();
            seen.insert(sorted)
        });
    }
    combos
}

/// Refuses bounds whose sweep would not stay desk-scale.
pub fn validate_bounds(cfg: &SystemConfig, bounds: &ExploreBounds) -> Result<(), RunError> {
    let alphabet = cfg.object.alphabet().len() as u64;
    let scripts = alphabet.pow(bounds.ops_per_process as u32);
    let combo_estimate = scripts.saturating_pow(cfg.object.n as u32);
    if cfg.object.n > 3
        || bounds.ops_per_process > 2
        || bounds.max_crashes > 2
        || combo_estimate > 200_000
    {
        return Err(RunError::Config(ConfigError::Invalid(format!(
            "bounds too large for exhaustive exploration: ~{combo_estimate} script \
             combinations, each on the order of 10^3..10^5 states; keep N <= 3, \
             ops <= 2 per process, crashes <= 2"
        ))));
    }
    Ok(())
}

#[derive(Clone)]
struct Node {
    sys: System,
    durable: OnlineChecker,
    detectable: OnlineChecker,
}

impl Node {
    fn key(&self) -> Vec<u8> {
        let mut k = self.sys.state_key();
        k.push(0xfc);
        k.extend_from_slice(&self.durable.state_key());
        k.push(0xfc);
        k.extend_from_slice(&self.detectable.state_key());
        k
    }
}

struct ComboRun<'a> {
    cfg: &'a SystemConfig,
    bounds: &'a ExploreBounds,
    scripts: Vec<Vec<OpDescriptor>>,
    visited: HashSet<Vec<u8>>,
    path: Vec<Directive>,
    report: ExploreReport,
    capped: bool,
    stop: bool,
}

impl<'a> ComboRun<'a> {
    fn enabled(&self, sys: &System) -> Vec<Directive> {
        let mut actions = Vec::with_capacity(sys.n() + 1);
        for p in 0..sys.n() {
            if sys.can_step(p) {
                actions.push(Directive::Step(p));
            } else if sys.can_recover(p) {
                actions.push(Directive::RecoverStep(p));
            }
        }
        // A crash only does something when a machine is actually running:
        // otherwise it wipes already-empty contexts, leaves memory intact,
        // and adds an event both checkers ignore, so every verdict in that
        // branch is covered by the crash-free continuation.
        if sys.crashes < self.bounds.max_crashes && sys.any_machine_live() {
            actions.push(Directive::Crash);
        }
        actions
    }

    fn dfs(&mut self, node: Node) {
        if self.stop || self.capped {
            return;
        }
        if self.report.states >= self.bounds.max_states {
            self.capped = true;
            return;
        }
        if self.bounds.memoize && !self.visited.insert(node.key()) {
            return;
        }
        self.report.states += 1;
        self.report.max_attempt_steps = self
            .report
            .max_attempt_steps
            .max(node.sys.max_attempt_steps);
        if node.sys.is_terminal() {
            self.report.histories += 1;
            return;
        }
        let actions = self.enabled(&node.sys);
        let last = actions.len() - 1;
        let mut node = Some(node);
        for (i, action) in actions.into_iter().enumerate() {
            let mut child = if i == last {
                node.take().expect("node moved only once")
            } else {
                node.as_ref()
                    .expect("node present until last child")
                    .clone()
            };
            let ev = child
                .sys
                .apply(action)
                .expect("enabled actions always apply");
            self.path.push(action);
            if let Some(ev) = &ev {
                child.durable.observe(ev);
                child.detectable.observe(ev);
            }
            if child.durable.is_capped() || child.detectable.is_capped() {
                self.report.inconclusive += 1;
            } else if child.durable.is_dead() || child.detectable.is_dead() {
                self.report.violations += 1;
                if self.report.first_counterexample.is_none() {
                    self.record_counterexample(&child);
                }
                if self.bounds.stop_at_first_violation {
                    self.stop = true;
                }
            } else {
                self.dfs(child);
            }
            self.path.pop();
            if self.stop || self.capped {
                return;
            }
        }
    }

    /// The exploring system does not carry its history; replaying the path
    /// directives reconstructs it for the counterexample document.
    fn record_counterexample(&mut self, child: &Node) {
        let schedule = Schedule::new(self.scripts.clone(), self.path.clone());
        let outcome =
            crate::system::run_schedule(self.cfg, &schedule, None).expect("violating path replays");
        self.report.first_counterexample = Some(Counterexample {
            schedule,
            history: outcome.history,
            durable: child.durable.verdict(),
            detectable: child.detectable.verdict(),
            reason: child
                .detectable
                .result()
                .explanation
                .or(child.durable.result().explanation)
                .unwrap_or_default(),
        });
    }
}

/// Explores one fixed script combination exhaustively.
pub fn explore_scripts(
    cfg: &SystemConfig,
    scripts: Vec<Vec<OpDescriptor>>,
    bounds: &ExploreBounds,
) -> Result<ExploreReport, RunError> {
    let mut sys = System::new(cfg, scripts.clone())?;
    sys.set_record_history(false);
    let spec = cfg.object.seq_spec();
    let node = Node {
        sys,
        durable: OnlineChecker::new(spec, CheckMode::Durable, bounds.work_cap, false),
        detectable: OnlineChecker::new(spec, CheckMode::Detectable, bounds.work_cap, false),
    };
    let mut run = ComboRun {
        cfg,
        bounds,
        scripts,
        visited: HashSet::new(),
        path: Vec::new(),
        report: ExploreReport {
            combos: 1,
            ..Default::default()
        },
        capped: false,
        stop: false,
    };
    run.dfs(node);
    if run.capped {
        run.report.capped_combos += 1;
    }
    Ok(run.report)
}

/// The full exhaustive sweep: every script combination within the bounds,
/// each explored over every interleaving and crash placement.
pub fn exhaustive(cfg: &SystemConfig, bounds: &ExploreBounds) -> Result<ExploreReport, RunError> {
    validate_bounds(cfg, bounds)?;
    let combos = script_combos(cfg, bounds.ops_per_process);
    let mut total = ExploreReport::default();
    if bounds.stop_at_first_violation {
        for scripts in combos {
            let report = explore_scripts(cfg, scripts, bounds)?;
            let found = report.violations > 0;
            total.merge(report);
            if found {
                break;
            }
        }
    } else {
        let reports: Vec<Result<ExploreReport, RunError>> = combos
            .into_par_iter()
            .map(|scripts| explore_scripts(cfg, scripts, bounds))
            .collect();
        for r in reports {
            total.merge(r?);
        }
    }
    Ok(total)
}
