//! Seeded random schedule campaigns.
//!
//! Each schedule draws random scripts and then advances a uniformly random
//! enabled process at every step, injecting crashes with the configured
//! probability while the crash budget lasts. Every random choice derives
//! from the campaign seed and the schedule index, so campaigns are
//! reproducible run to run and schedules replay independently.

use crate::checker::{check_history, CheckMode, Verdict};
use crate::explore::Counterexample;
use crate::schedule::{Directive, Schedule};
use crate::system::{RunError, System, SystemConfig};
use crate::value::OpDescriptor;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub schedules: u64,
    pub seed: u64,
    pub ops_per_process: usize,
    pub max_crashes: usize,
    pub crash_prob: f64,
    /// Scheduler steps per schedule before giving up; 0 picks the default
    /// `10 * N * total_ops`, enough that only genuine starvation hits it.
    pub step_budget: usize,
    pub work_cap: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            schedules: 1000,
            seed: 0,
            ops_per_process: 2,
            max_crashes: 2,
            crash_prob: 0.05,
            step_budget: 0,
            work_cap: crate::checker::DEFAULT_WORK_CAP,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schedules: u64,
    pub passes: u64,
    pub violations: u64,
    pub inconclusive: u64,
    pub budget_exhausted: u64,
    pub max_attempt_steps: usize,
    pub first_counterexample: Option<Counterexample>,
}

impl CampaignReport {
    pub fn clean(&self) -> bool {
        self.violations == 0 && self.inconclusive == 0
    }
}

/// Outcome classification for one schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunClass {
    Pass,
    Violation,
    Inconclusive,
    BudgetExhausted,
}

fn random_scripts(
    cfg: &SystemConfig,
    c: &CampaignConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<OpDescriptor>> {
    let alphabet = cfg.object.alphabet();
    (0..cfg.object.n)
        .map(|_| {
            (0..c.ops_per_process)
                .map(|_| *alphabet.choose(rng).expect("non-empty alphabet"))
                .collect()
        })
        .collect()
}

type ScheduleResult = (RunClass, Option<Counterexample>, usize);

fn run_one(cfg: &SystemConfig, c: &CampaignConfig, index: u64) -> Result<ScheduleResult, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index);
    let scripts = random_scripts(cfg, c, &mut rng);
    let mut sys = System::new(cfg, scripts.clone())?;
    let budget = if c.step_budget == 0 {
        let total_ops = cfg.object.n * c.ops_per_process.max(1);
        10 * cfg.object.n * total_ops
    } else {
        c.step_budget
    };
    let mut directives = Vec::new();
    let mut budget_exhausted = false;
    loop {
        if sys.is_terminal() {
            break;
        }
        if directives.len() >= budget {
            budget_exhausted = true;
            break;
        }
        let mut enabled: Vec<Directive> = Vec::new();
        for p in 0..sys.n() {
            if sys.can_step(p) {
                enabled.push(Directive::Step(p));
            } else if sys.can_recover(p) {
                enabled.push(Directive::RecoverStep(p));
            }
        }
        let crash_allowed = sys.crashes < c.max_crashes;
        let d = if crash_allowed && rng.gen_bool(c.crash_prob) {
            Directive::Crash
        } else {
            *enabled
                .choose(&mut rng)
                .expect("non-terminal system has enabled steps")
        };
        sys.apply(d).expect("enabled directives apply");
        directives.push(d);
    }
    let spec = cfg.object.seq_spec();
    let history = sys.history.clone();
    let durable = check_history(&history, spec, CheckMode::Durable, c.work_cap)
        .expect("histories from runs are well-formed");
    let detectable = check_history(&history, spec, CheckMode::Detectable, c.work_cap)
        .expect("histories from runs are well-formed");
    let max_steps = sys.max_attempt_steps;
    let class = match (durable.verdict, detectable.verdict) {
        (Verdict::Fail, _) | (_, Verdict::Fail) => RunClass::Violation,
        (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => RunClass::Inconclusive,
        _ if budget_exhausted => RunClass::BudgetExhausted,
        _ => RunClass::Pass,
    };
    let cex = if class == RunClass::Violation {
        Some(Counterexample {
            schedule: Schedule::new(scripts, directives),
            history,
            durable: durable.verdict,
            detectable: detectable.verdict,
            reason: detectable
                .explanation
                .or(durable.explanation)
                .unwrap_or_default(),
        })
    } else {
        None
    };
    Ok((class, cex, max_steps))
}

/// Runs the campaign. Schedules fan out across worker threads, one complete
/// system per worker; results merge by schedule index, so the report is
/// identical for identical `(config, seed)`.
pub fn run_campaign(cfg: &SystemConfig, c: &CampaignConfig) -> Result<CampaignReport, RunError> {
    let results: Vec<Result<ScheduleResult, RunError>> = (0..c.schedules)
        .into_par_iter()
        .map(|i| run_one(cfg, c, i))
        .collect();
    let mut report = CampaignReport {
        schedules: c.schedules,
        ..Default::default()
    };
    for r in results {
        let (class, cex, max_steps) = r?;
        report.max_attempt_steps = report.max_attempt_steps.max(max_steps);
        match class {
            RunClass::Pass => report.passes += 1,
            RunClass::Violation => {
                report.violations += 1;
                if report.first_counterexample.is_none() {
                    report.first_counterexample = cex;
                }
            }
            RunClass::Inconclusive => report.inconclusive += 1,
            RunClass::BudgetExhausted => report.budget_exhausted += 1,
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::{ObjectConfig, ObjectKind};

    #[test]
    fn campaigns_are_reproducible() {
        let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::RegDetect, 2));
        let c = CampaignConfig {
            schedules: 50,
            seed: 42,
            ..Default::default()
        };
        let a = run_campaign(&cfg, &c).unwrap();
        let b = run_campaign(&cfg, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.schedules, 50);
        assert!(a.clean(), "unmutated register must be clean: {a:?}");
    }

    #[test]
    fn campaign_counterexamples_replay_identically() {
        let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::CasDetect, 2))
            .with_mutation(Some(crate::objects::Mutation::CasSkipCp1));
        let c = CampaignConfig {
            schedules: 3000,
            seed: 7,
            crash_prob: 0.15,
            ..Default::default()
        };
        let report = run_campaign(&cfg, &c).unwrap();
        assert!(report.violations > 0, "mutant survived: {report:?}");
        let cex = report.first_counterexample.unwrap();
        let outcome = crate::system::run_schedule(&cfg, &cex.schedule, None).unwrap();
        assert_eq!(outcome.history, cex.history);
    }
}
