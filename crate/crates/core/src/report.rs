//! Report documents emitted by the command-line front end. One structured
//! document per run: configuration echo, totals, per-verdict counts, and
//! embedded counterexamples. Reports contain no wall-clock data, so a rerun
//! with the same configuration and seed is byte-identical.

use crate::explore::Counterexample;
use crate::format::render_counterexample;
use crate::system::SystemConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub pass: u64,
    pub fail: u64,
    pub inconclusive: u64,
    pub budget_exhausted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub schedules: u64,
    pub states: u64,
    pub histories: u64,
}

/// One embedded counterexample: the replayable document plus verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleDoc {
    pub durable: String,
    pub detectable: String,
    pub reason: String,
    /// The full replayable text document, also written to its own file.
    pub document: String,
}

impl CounterexampleDoc {
    pub fn new(cfg: &SystemConfig, cex: &Counterexample) -> Self {
        CounterexampleDoc {
            durable: cex.durable.to_string(),
            detectable: cex.detectable.to_string(),
            reason: cex.reason.clone(),
            document: render_counterexample(cfg, cex),
        }
    }
}

/// The single report document every command writes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub command: String,
    /// Full configuration, flat key=value, so any number is reproducible.
    pub config: BTreeMap<String, String>,
    pub totals: Totals,
    pub verdicts: VerdictCounts,
    pub counterexamples: Vec<CounterexampleDoc>,
    /// Extra command-specific results (space bits, image counts, witnesses).
    pub results: BTreeMap<String, String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            version: crate::VERSION.to_string(),
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn result(&mut self, key: &str, value: impl ToString) {
        self.results.insert(key.to_string(), value.to_string());
    }

    /// Pretty JSON, stable key order.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Human-readable rendering carrying the same verdict data.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} report (v{})\n", self.command, self.version));
        for (k, v) in &self.config {
            out.push_str(&format!("  {k} = {v}\n"));
        }
        out.push_str(&format!(
            "totals: schedules={} states={} histories={}\n",
            self.totals.schedules, self.totals.states, self.totals.histories
        ));
        out.push_str(&format!(
            "verdicts: pass={} fail={} inconclusive={} budget-exhausted={}\n",
            self.verdicts.pass,
            self.verdicts.fail,
            self.verdicts.inconclusive,
            self.verdicts.budget_exhausted
        ));
        for (k, v) in &self.results {
            out.push_str(&format!("result: {k} = {v}\n"));
        }
        for (i, cex) in self.counterexamples.iter().enumerate() {
            out.push_str(&format!(
                "counterexample {i}: durable={} detectable={} reason={}\n",
                cex.durable, cex.detectable, cex.reason
            ));
        }
        out
    }
}
