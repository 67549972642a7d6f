//! Command-line front end for the verification harness.
//!
//! Subcommands: `campaign` (seeded random schedules), `exhaustive` (every
//! interleaving and crash placement within bounds), `spacecount` (distinct
//! reachable shared-memory images), `audit` (analytic shared-bit count),
//! `perturb` (doubly-perturbing witness search), `mutate` (campaign or sweep
//! against a registered mutation), and `replay` (re-execute a counterexample
//! file and confirm it reproduces byte-for-byte).
//!
//! Exit codes: 0 all checks pass, 1 violation found, 2 inconclusive,
//! 64 usage error.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use detectable_core::audit::{enumerate_memory_states, space_bits, StateCountConfig};
use detectable_core::campaign::{run_campaign, CampaignConfig};
use detectable_core::checker::{check_history, CheckMode, Verdict, DEFAULT_WORK_CAP};
use detectable_core::explore::{exhaustive, Counterexample, ExploreBounds};
use detectable_core::format::parse_counterexample;
use detectable_core::objects::{Mutation, ObjectConfig, ObjectKind};
use detectable_core::perturb::{search_doubly_perturbing, SearchBounds, SearchResult};
use detectable_core::report::{CounterexampleDoc, Report};
use detectable_core::seqspec::SeqSpecKind;
use detectable_core::system::{run_schedule, CallerPolicy, SystemConfig};

const EXIT_VIOLATION: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "detectable")]
#[command(about = "Verification harness for recoverable objects over simulated NVM")]
#[command(version)]
struct Cli {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Report path; defaults to stdout. Relative paths resolve against
    /// $DETECTABLE_OUT_DIR when that is set.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Report format: structured | text
    #[arg(long, global = true, default_value = "structured")]
    format: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ObjectArgs {
    /// Object kind: reg-detect | cas-detect | maxreg
    #[arg(long)]
    object: String,

    /// Number of processes.
    #[arg(long, default_value_t = 2)]
    n: usize,

    /// Value domain, comma-separated; defaults per object kind.
    #[arg(long)]
    domain: Option<String>,

    /// Caller policy after a failed recovery: drop | retry:<k>
    #[arg(long, default_value = "drop")]
    caller_policy: String,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded random schedule campaign.
    Campaign {
        #[command(flatten)]
        object: ObjectArgs,
        /// Campaign seed; required so every report is reproducible.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10000)]
        schedules: u64,
        /// Operations per process per schedule.
        #[arg(long, default_value_t = 2)]
        ops: usize,
        #[arg(long, default_value_t = 2)]
        max_crashes: usize,
        #[arg(long, default_value_t = 0.05)]
        crash_prob: f64,
        /// Step budget per schedule; 0 = 10 * N * total_ops.
        #[arg(long, default_value_t = 0)]
        budget: usize,
    },
    /// Exhaustive sweep over scripts, interleavings, and crash placements.
    Exhaustive {
        #[command(flatten)]
        object: ObjectArgs,
        #[arg(long, default_value_t = 2)]
        ops: usize,
        #[arg(long, default_value_t = 1)]
        max_crashes: usize,
    },
    /// Count distinct reachable shared-memory images.
    Spacecount {
        #[command(flatten)]
        object: ObjectArgs,
        #[arg(long, default_value_t = 40)]
        depth: usize,
        #[arg(long, default_value_t = 2_000_000)]
        max_states: u64,
        #[arg(long, default_value_t = 1)]
        max_crashes: usize,
        /// Compare private cells too, not just shared memory.
        #[arg(long)]
        include_private: bool,
        /// Run operations one at a time; sound lower bound, much cheaper.
        #[arg(long)]
        solo: bool,
    },
    /// Analytic shared-bit audit from the declared cell layout.
    Audit {
        #[command(flatten)]
        object: ObjectArgs,
        #[arg(long, default_value_t = 4)]
        value_bits: u64,
    },
    /// Search for a doubly-perturbing witness over a sequential spec.
    Perturb {
        /// Spec: register | cas | maxreg | bounded-counter | fetch-add | queue
        #[arg(long)]
        spec: String,
        /// Value domain for the spec's alphabet.
        #[arg(long, default_value = "0,1")]
        domain: String,
        #[arg(long, default_value_t = 6)]
        bound: usize,
        #[arg(long, default_value_t = 4)]
        extension_bound: usize,
    },
    /// Run a registered mutation and hunt for the violation it introduces.
    Mutate {
        #[command(flatten)]
        object: ObjectArgs,
        /// Mutation id, e.g. cas:skip-cp1.
        #[arg(long)]
        mutation: String,
        /// Random schedules to try; 0 = exhaustive sweep instead.
        #[arg(long, default_value_t = 0)]
        schedules: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        ops: usize,
        #[arg(long, default_value_t = 1)]
        max_crashes: usize,
        #[arg(long, default_value_t = 0.15)]
        crash_prob: f64,
    },
    /// Re-execute a counterexample file; verifies byte-identical history.
    Replay {
        /// Path to a counterexample document.
        file: PathBuf,
    },
}

fn main() -> ExitCode {
    let mut args: Vec<String> = std::env::args().collect();
    if let Err(e) = apply_config_file(&mut args) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

/// Splices `key=value` lines from `--config FILE` in front of the real
/// command-line flags, so explicit flags win.
fn apply_config_file(args: &mut Vec<String>) -> anyhow::Result<()> {
    let pos = match args.iter().position(|a| a == "--config") {
        Some(p) => p,
        None => return Ok(()),
    };
    let path = args
        .get(pos + 1)
        .ok_or_else(|| anyhow::anyhow!("--config needs a path"))?
        .clone();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| anyhow::anyhow!("cannot read config {path}: {e}"))?;
    let mut extra = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("{path}:{}: expected key=value", i + 1))?;
        let flag = format!("--{}", key.trim());
        if args.contains(&flag) {
            continue; // explicit flag wins
        }
        extra.push(flag);
        extra.push(value.trim().to_string());
    }
    // Insert right after the subcommand so clap parses them as its flags
    // and later explicit flags override.
    let insert_at = 2.min(args.len());
    args.splice(insert_at..insert_at, extra);
    Ok(())
}

fn parse_object(args: &ObjectArgs) -> anyhow::Result<SystemConfig> {
    let kind = ObjectKind::parse(&args.object).ok_or_else(|| {
        anyhow::anyhow!(
            "unknown object kind {:?}; valid kinds: reg-detect, cas-detect, maxreg",
            args.object
        )
    })?;
    let mut object = ObjectConfig::new(kind, args.n);
    if let Some(domain) = &args.domain {
        let parsed: Result<Vec<i64>, _> = domain.split(',').map(|v| v.trim().parse()).collect();
        object = object.with_domain(parsed.map_err(|_| anyhow::anyhow!("bad domain"))?);
    }
    let caller_policy = if args.caller_policy == "drop" {
        CallerPolicy::Drop
    } else if let Some(k) = args.caller_policy.strip_prefix("retry:") {
        CallerPolicy::Retry(k.parse()?)
    } else {
        anyhow::bail!("unknown caller policy {:?}", args.caller_policy);
    };
    object.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(SystemConfig {
        object,
        mutation: None,
        caller_policy,
        record_accesses: false,
    })
}

fn echo_object(report: &mut Report, cfg: &SystemConfig) {
    report.set("object", cfg.object.kind);
    report.set("n", cfg.object.n);
    report.set(
        "domain",
        cfg.object
            .domain
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    if let Some(m) = cfg.mutation {
        report.set("mutation", m);
    }
}

struct Emit {
    output: Option<PathBuf>,
    structured: bool,
}

impl Emit {
    fn resolve_output(path: &Path) -> PathBuf {
        if path.is_absolute() {
            return path.to_path_buf();
        }
        match std::env::var_os("DETECTABLE_OUT_DIR") {
            Some(dir) => PathBuf::from(dir).join(path),
            None => path.to_path_buf(),
        }
    }

    /// Writes the report (and the first counterexample as a standalone
    /// replayable file next to it); maps verdicts to the exit code.
    fn finish(&self, report: &Report) -> anyhow::Result<ExitCode> {
        let body = if self.structured {
            report.to_json()
        } else {
            report.to_text()
        };
        match &self.output {
            Some(path) => {
                let path = Self::resolve_output(path);
                std::fs::write(&path, &body)?;
                if let Some(first) = report.counterexamples.first() {
                    let cex_path = path.with_extension("cex");
                    std::fs::write(&cex_path, &first.document)?;
                    eprintln!("counterexample written to {}", cex_path.display());
                }
            }
            None => print!("{body}"),
        }
        let code = if report.verdicts.fail > 0 {
            EXIT_VIOLATION
        } else if report.verdicts.inconclusive > 0 {
            EXIT_INCONCLUSIVE
        } else {
            0
        };
        Ok(ExitCode::from(code))
    }
}

fn push_counterexample(report: &mut Report, cfg: &SystemConfig, cex: &Option<Counterexample>) {
    if let Some(cex) = cex {
        report
            .counterexamples
            .push(CounterexampleDoc::new(cfg, cex));
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let emit = Emit {
        output: cli.output.clone(),
        structured: match cli.format.as_str() {
            "structured" | "json" => true,
            "text" => false,
            other => anyhow::bail!("unknown format {other:?} (structured|text)"),
        },
    };
    match cli.command {
        Command::Campaign {
            object,
            seed,
            schedules,
            ops,
            max_crashes,
            crash_prob,
            budget,
        } => {
            let cfg = parse_object(&object)?;
            let campaign = CampaignConfig {
                schedules,
                seed,
                ops_per_process: ops,
                max_crashes,
                crash_prob,
                step_budget: budget,
                work_cap: DEFAULT_WORK_CAP,
            };
            let r = run_campaign(&cfg, &campaign)?;
            let mut report = Report::new("campaign");
            echo_object(&mut report, &cfg);
            report.set("seed", seed);
            report.set("schedules", schedules);
            report.set("ops", ops);
            report.set("max_crashes", max_crashes);
            report.set("crash_prob", crash_prob);
            report.totals.schedules = r.schedules;
            report.verdicts.pass = r.passes;
            report.verdicts.fail = r.violations;
            report.verdicts.inconclusive = r.inconclusive;
            report.verdicts.budget_exhausted = r.budget_exhausted;
            report.result("max_attempt_steps", r.max_attempt_steps);
            push_counterexample(&mut report, &cfg, &r.first_counterexample);
            emit.finish(&report)
        }
        Command::Exhaustive {
            object,
            ops,
            max_crashes,
        } => {
            let cfg = parse_object(&object)?;
            let bounds = ExploreBounds {
                ops_per_process: ops,
                max_crashes,
                ..Default::default()
            };
            let r = exhaustive(&cfg, &bounds)?;
            let mut report = Report::new("exhaustive");
            echo_object(&mut report, &cfg);
            report.set("ops", ops);
            report.set("max_crashes", max_crashes);
            report.totals.schedules = r.combos;
            report.totals.states = r.states;
            report.totals.histories = r.histories;
            report.verdicts.fail = r.violations;
            report.verdicts.inconclusive = r.inconclusive + r.capped_combos;
            report.verdicts.pass = r.histories.saturating_sub(r.violations);
            report.result("max_attempt_steps", r.max_attempt_steps);
            push_counterexample(&mut report, &cfg, &r.first_counterexample);
            emit.finish(&report)
        }
        Command::Spacecount {
            object,
            depth,
            max_states,
            max_crashes,
            include_private,
            solo,
        } => {
            let cfg = parse_object(&object)?;
            let r = enumerate_memory_states(
                &cfg.object,
                &StateCountConfig {
                    depth,
                    max_states,
                    max_crashes,
                    include_private,
                    solo,
                },
            )?;
            let mut report = Report::new("spacecount");
            echo_object(&mut report, &cfg);
            report.set("depth", depth);
            report.set("max_states", max_states);
            report.set("include_private", include_private);
            report.set("solo", solo);
            report.totals.states = r.states_explored;
            report.result("distinct_images", r.distinct_images);
            report.result(
                "count_is",
                if r.exhausted {
                    "exact-for-depth"
                } else {
                    "lower-bound-so-far"
                },
            );
            emit.finish(&report)
        }
        Command::Audit { object, value_bits } => {
            let cfg = parse_object(&object)?;
            let bits = space_bits(cfg.object.kind, cfg.object.n, value_bits);
            let mut report = Report::new("audit");
            echo_object(&mut report, &cfg);
            report.set("value_bits", value_bits);
            report.result("shared_bits", bits);
            emit.finish(&report)
        }
        Command::Perturb {
            spec,
            domain,
            bound,
            extension_bound,
        } => {
            let spec_kind = SeqSpecKind::parse(&spec).ok_or_else(|| {
                anyhow::anyhow!(
                    "unknown spec {spec:?}; valid: register, cas, maxreg, \
                     bounded-counter, fetch-add, queue"
                )
            })?;
            let domain: Vec<i64> = domain
                .split(',')
                .map(|v| v.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| anyhow::anyhow!("bad domain"))?;
            let bounds = SearchBounds {
                history_bound: bound,
                extension_bound,
            };
            let result = search_doubly_perturbing(spec_kind, &domain, bounds);
            let mut report = Report::new("perturb");
            report.set("spec", spec_kind);
            report.set(
                "domain",
                domain
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            report.set("bound", bound);
            report.set("extension_bound", extension_bound);
            match result {
                SearchResult::Found(w) => {
                    report.result("witness", "found");
                    report.result("op_p", w.op_p);
                    report.result(
                        "h2",
                        w.h2()
                            .iter()
                            .map(|e| format!("{}@p{}", e.op, e.pid))
                            .collect::<Vec<_>>()
                            .join(" "),
                    );
                    report.result(
                        "responses1",
                        format!("{} -> {}", w.responses1.0, w.responses1.1),
                    );
                    report.result(
                        "responses2",
                        format!("{} -> {}", w.responses2.0, w.responses2.1),
                    );
                }
                SearchResult::ExhaustedAtBound(b) => {
                    report.result("witness", "none");
                    report.result("exhausted_at_bound", b.history_bound);
                }
            }
            emit.finish(&report)
        }
        Command::Mutate {
            object,
            mutation,
            schedules,
            seed,
            ops,
            max_crashes,
            crash_prob,
        } => {
            let mut cfg = parse_object(&object)?;
            let m = Mutation::parse(&mutation).ok_or_else(|| {
                anyhow::anyhow!(
                    "unknown mutation {:?}; valid mutations: {}",
                    mutation,
                    Mutation::ALL.map(|m| m.as_str()).join(", ")
                )
            })?;
            cfg.mutation = Some(m);
            cfg.object
                .build(Some(m))
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut report = Report::new("mutate");
            echo_object(&mut report, &cfg);
            report.set("ops", ops);
            report.set("max_crashes", max_crashes);
            if schedules > 0 {
                report.set("schedules", schedules);
                report.set("seed", seed);
                report.set("crash_prob", crash_prob);
                let campaign = CampaignConfig {
                    schedules,
                    seed,
                    ops_per_process: ops,
                    max_crashes,
                    crash_prob,
                    step_budget: 0,
                    work_cap: DEFAULT_WORK_CAP,
                };
                let r = run_campaign(&cfg, &campaign)?;
                report.totals.schedules = r.schedules;
                report.verdicts.pass = r.passes;
                report.verdicts.fail = r.violations;
                report.verdicts.inconclusive = r.inconclusive;
                report.verdicts.budget_exhausted = r.budget_exhausted;
                push_counterexample(&mut report, &cfg, &r.first_counterexample);
            } else {
                let bounds = ExploreBounds {
                    ops_per_process: ops,
                    max_crashes,
                    stop_at_first_violation: true,
                    ..Default::default()
                };
                let r = exhaustive(&cfg, &bounds)?;
                report.totals.schedules = r.combos;
                report.totals.states = r.states;
                report.totals.histories = r.histories;
                report.verdicts.fail = r.violations;
                report.verdicts.inconclusive = r.inconclusive + r.capped_combos;
                report.verdicts.pass = r.histories.saturating_sub(r.violations);
                push_counterexample(&mut report, &cfg, &r.first_counterexample);
            }
            emit.finish(&report)
        }
        Command::Replay { file } => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", file.display()))?;
            let (cfg, cex) = parse_counterexample(&text)?;
            let outcome = run_schedule(&cfg, &cex.schedule, None)?;
            // The replayed history is printed so it can be diffed against
            // the recorded one byte-for-byte.
            for line in outcome.history.render_lines() {
                println!("{line}");
            }
            if outcome.history != cex.history {
                anyhow::bail!("replayed history differs from the recorded one");
            }
            let spec = cfg.object.seq_spec();
            let durable =
                check_history(&outcome.history, spec, CheckMode::Durable, DEFAULT_WORK_CAP)
                    .map_err(|e| anyhow::anyhow!("replayed history invalid: {e}"))?;
            let detectable = check_history(
                &outcome.history,
                spec,
                CheckMode::Detectable,
                DEFAULT_WORK_CAP,
            )
            .map_err(|e| anyhow::anyhow!("replayed history invalid: {e}"))?;
            let mut report = Report::new("replay");
            echo_object(&mut report, &cfg);
            report.set("file", file.display());
            report.result("history_identical", true);
            report.result("durable", durable.verdict);
            report.result("detectable", detectable.verdict);
            match (durable.verdict, detectable.verdict) {
                (Verdict::Fail, _) | (_, Verdict::Fail) => report.verdicts.fail = 1,
                (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => {
                    report.verdicts.inconclusive = 1
                }
                _ => report.verdicts.pass = 1,
            }
            emit.finish(&report)
        }
    }
}
