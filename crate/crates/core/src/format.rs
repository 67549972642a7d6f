//! Versioned line-oriented text formats for schedules, histories, and
//! counterexample files. A serialized counterexample replays to the
//! identical history, byte for byte.

use crate::checker::Verdict;
use crate::explore::Counterexample;
use crate::history::{EventKind, History, HistoryEvent, InstanceId};
use crate::objects::{Mutation, ObjectConfig, ObjectKind};
use crate::schedule::{Directive, Schedule};
use crate::system::{CallerPolicy, SystemConfig};
use crate::value::{OpDescriptor, Response};
use thiserror::Error;

pub const COUNTEREXAMPLE_HEADER: &str = "#detectable-counterexample v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    At { line: usize, reason: String },
    #[error("unsupported version header {0:?}")]
    Version(String),
    #[error("truncated file: missing section {0}")]
    Truncated(&'static str),
}

fn err(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::At {
        line,
        reason: reason.into(),
    }
}

pub fn render_descriptor(d: &OpDescriptor) -> String {
    d.to_string()
}

pub fn parse_descriptor(s: &str) -> Result<OpDescriptor, String> {
    let s = s.trim();
    let (name, args) = match s.find('(') {
        Some(open) => {
            let close = s
                .rfind(')')
                .ok_or_else(|| format!("unbalanced parens in {s:?}"))?;
            (&s[..open], Some(&s[open + 1..close]))
        }
        None => (s, None),
    };
    let ints = |args: Option<&str>| -> Result<Vec<i64>, String> {
        args.unwrap_or("")
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<i64>().map_err(|e| e.to_string()))
            .collect()
    };
    let got = ints(args)?;
    let arity = |want: usize| -> Result<(), String> {
        if got.len() == want {
            Ok(())
        } else {
            Err(format!(
                "{name} takes {want} argument(s), got {}",
                got.len()
            ))
        }
    };
    match name {
        "read" => {
            arity(0)?;
            Ok(OpDescriptor::Read)
        }
        "write" => {
            arity(1)?;
            Ok(OpDescriptor::Write(got[0]))
        }
        "cas" => {
            arity(2)?;
            Ok(OpDescriptor::Cas {
                old: got[0],
                new: got[1],
            })
        }
        "writemax" => {
            arity(1)?;
            Ok(OpDescriptor::WriteMax(got[0]))
        }
        "inc" => {
            arity(0)?;
            Ok(OpDescriptor::Increment)
        }
        "faa" => {
            arity(1)?;
            Ok(OpDescriptor::FetchAdd(got[0]))
        }
        "enq" => {
            arity(1)?;
            Ok(OpDescriptor::Enqueue(got[0]))
        }
        "deq" => {
            arity(0)?;
            Ok(OpDescriptor::Dequeue)
        }
        other => Err(format!("unknown operation {other:?}")),
    }
}

pub fn parse_response(s: &str) -> Result<Response, String> {
    match s {
        "ack" => Ok(Response::Ack),
        "fail" => Ok(Response::Fail),
        "true" => Ok(Response::Bool(true)),
        "false" => Ok(Response::Bool(false)),
        "empty" => Ok(Response::Empty),
        n => n
            .parse::<i64>()
            .map(Response::Val)
            .map_err(|_| format!("unknown response {s:?}")),
    }
}

/// Splits a comma-separated op list, ignoring commas inside parentheses.
fn split_ops(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts.into_iter().filter(|p| !p.trim().is_empty()).collect()
}

fn parse_directive(s: &str) -> Result<Directive, String> {
    let mut parts = s.split_whitespace();
    match (parts.next(), parts.next()) {
        (Some("crash"), None) => Ok(Directive::Crash),
        (Some("step"), Some(p)) => Ok(Directive::Step(
            p.parse().map_err(|_| format!("bad pid {p:?}"))?,
        )),
        (Some("recover"), Some(p)) => Ok(Directive::RecoverStep(
            p.parse().map_err(|_| format!("bad pid {p:?}"))?,
        )),
        _ => Err(format!("unknown directive {s:?}")),
    }
}

fn parse_event(s: &str) -> Result<HistoryEvent, String> {
    let mut parts = s.split_whitespace();
    let seq = parts
        .next()
        .ok_or("empty event line")?
        .parse::<usize>()
        .map_err(|_| "bad seq".to_string())?;
    let kind = match parts.next().ok_or("missing event kind")? {
        "invoke" => EventKind::Invoke,
        "respond" => EventKind::Respond,
        "crash" => EventKind::Crash,
        "recover-invoke" => EventKind::RecoverInvoke,
        "recover-respond" => EventKind::RecoverRespond,
        other => return Err(format!("unknown event kind {other:?}")),
    };
    let mut ev = HistoryEvent {
        seq,
        kind,
        pid: None,
        instance: None,
        descriptor: None,
        value: None,
    };
    for field in parts {
        let (key, val) = field
            .split_once('=')
            .ok_or_else(|| format!("malformed field {field:?}"))?;
        match key {
            "p" => ev.pid = Some(val.parse().map_err(|_| format!("bad pid {val:?}"))?),
            "inst" => {
                let (pid, ordinal) = val
                    .split_once(':')
                    .ok_or_else(|| format!("malformed instance {val:?}"))?;
                ev.instance = Some(InstanceId {
                    pid: pid.parse().map_err(|_| format!("bad pid {pid:?}"))?,
                    ordinal: ordinal
                        .parse()
                        .map_err(|_| format!("bad ordinal {ordinal:?}"))?,
                });
            }
            "op" => ev.descriptor = Some(parse_descriptor(val)?),
            "val" => ev.value = Some(parse_response(val)?),
            other => return Err(format!("unknown field {other:?}")),
        }
    }
    Ok(ev)
}

/// The full counterexample document: configuration, schedule, recorded
/// history, verdicts.
pub fn render_counterexample(cfg: &SystemConfig, cex: &Counterexample) -> String {
    let mut out = String::new();
    out.push_str(COUNTEREXAMPLE_HEADER);
    out.push('\n');
    out.push_str("[config]\n");
    out.push_str(&format!("object={}\n", cfg.object.kind));
    out.push_str(&format!("n={}\n", cfg.object.n));
    out.push_str(&format!(
        "domain={}\n",
        cfg.object
            .domain
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    ));
    out.push_str(&format!("v_init={}\n", cfg.object.v_init));
    out.push_str(&format!("value_bits={}\n", cfg.object.value_bits));
    if cfg.object.reuse_initial_toggle {
        out.push_str("reuse_initial_toggle=true\n");
    }
    if let Some(m) = cfg.mutation {
        out.push_str(&format!("mutation={m}\n"));
    }
    match cfg.caller_policy {
        CallerPolicy::Drop => out.push_str("caller_policy=drop\n"),
        CallerPolicy::Retry(k) => out.push_str(&format!("caller_policy=retry:{k}\n")),
    }
    out.push_str("[scripts]\n");
    for (pid, script) in cex.schedule.scripts.iter().enumerate() {
        let ops = script
            .iter()
            .map(render_descriptor)
            .collect::<Vec<_>>()
            .join(", ");
        out.push_str(&format!("{pid}: {ops}\n"));
    }
    out.push_str("[directives]\n");
    for d in &cex.schedule.directives {
        out.push_str(&d.render());
        out.push('\n');
    }
    out.push_str("[history]\n");
    for line in cex.history.render_lines() {
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("[verdicts]\n");
    out.push_str(&format!("durable={}\n", cex.durable));
    out.push_str(&format!("detectable={}\n", cex.detectable));
    if !cex.reason.is_empty() {
        out.push_str(&format!("reason={}\n", cex.reason));
    }
    out
}

fn parse_verdict(s: &str) -> Result<Verdict, String> {
    match s {
        "pass" => Ok(Verdict::Pass),
        "fail" => Ok(Verdict::Fail),
        "inconclusive" => Ok(Verdict::Inconclusive),
        other => Err(format!("unknown verdict {other:?}")),
    }
}

/// Parses a counterexample document back into its configuration and payload.
pub fn parse_counterexample(text: &str) -> Result<(SystemConfig, Counterexample), ParseError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ParseError::Truncated("header"))?;
    if header.trim() != COUNTEREXAMPLE_HEADER {
        return Err(ParseError::Version(header.to_string()));
    }

    let mut section = "";
    let mut object: Option<ObjectKind> = None;
    let mut n = 0usize;
    let mut domain: Vec<i64> = Vec::new();
    let mut v_init = 0i64;
    let mut value_bits = 0u64;
    let mut reuse_initial_toggle = false;
    let mut mutation: Option<Mutation> = None;
    let mut caller_policy = CallerPolicy::Drop;
    let mut scripts: Vec<Vec<OpDescriptor>> = Vec::new();
    let mut directives: Vec<Directive> = Vec::new();
    let mut history = History::default();
    let mut durable = Verdict::Pass;
    let mut detectable = Verdict::Pass;
    let mut reason = String::new();
    let mut seen_sections: Vec<&str> = Vec::new();

    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name {
                "config" => "config",
                "scripts" => "scripts",
                "directives" => "directives",
                "history" => "history",
                "verdicts" => "verdicts",
                other => return Err(err(line_no, format!("unknown section [{other}]"))),
            };
            seen_sections.push(section);
            continue;
        }
        match section {
            "config" => {
                let (key, val) = line
                    .split_once('=')
                    .ok_or_else(|| err(line_no, "expected key=value"))?;
                match key {
                    "object" => {
                        object = Some(
                            ObjectKind::parse(val)
                                .ok_or_else(|| err(line_no, format!("unknown object {val:?}")))?,
                        )
                    }
                    "n" => n = val.parse().map_err(|_| err(line_no, "bad n"))?,
                    "domain" => {
                        domain = val
                            .split(',')
                            .map(|v| v.trim().parse::<i64>())
                            .collect::<Result<_, _>>()
                            .map_err(|_| err(line_no, "bad domain"))?
                    }
                    "v_init" => v_init = val.parse().map_err(|_| err(line_no, "bad v_init"))?,
                    "value_bits" => {
                        value_bits = val.parse().map_err(|_| err(line_no, "bad value_bits"))?
                    }
                    "reuse_initial_toggle" => {
                        reuse_initial_toggle =
                            val.parse().map_err(|_| err(line_no, "bad boolean"))?
                    }
                    "mutation" => {
                        mutation = Some(
                            Mutation::parse(val)
                                .ok_or_else(|| err(line_no, format!("unknown mutation {val:?}")))?,
                        )
                    }
                    "caller_policy" => {
                        caller_policy = if val == "drop" {
                            CallerPolicy::Drop
                        } else if let Some(k) = val.strip_prefix("retry:") {
                            CallerPolicy::Retry(
                                k.parse().map_err(|_| err(line_no, "bad retry count"))?,
                            )
                        } else {
                            return Err(err(line_no, format!("unknown policy {val:?}")));
                        }
                    }
                    other => return Err(err(line_no, format!("unknown config key {other:?}"))),
                }
            }
            "scripts" => {
                let (pid, ops) = line
                    .split_once(':')
                    .ok_or_else(|| err(line_no, "expected pid: op, op"))?;
                let pid: usize = pid
                    .trim()
                    .parse()
                    .map_err(|_| err(line_no, "bad script pid"))?;
                if pid != scripts.len() {
                    return Err(err(
                        line_no,
                        format!("expected script for pid {}", scripts.len()),
                    ));
                }
                let ops = split_ops(ops)
                    .into_iter()
                    .map(|p| parse_descriptor(p).map_err(|e| err(line_no, e)))
                    .collect::<Result<Vec<_>, _>>()?;
                scripts.push(ops);
            }
            "directives" => directives.push(parse_directive(line).map_err(|e| err(line_no, e))?),
            "history" => history
                .events
                .push(parse_event(line).map_err(|e| err(line_no, e))?),
            "verdicts" => {
                let (key, val) = line
                    .split_once('=')
                    .ok_or_else(|| err(line_no, "expected key=value"))?;
                match key {
                    "durable" => durable = parse_verdict(val).map_err(|e| err(line_no, e))?,
                    "detectable" => detectable = parse_verdict(val).map_err(|e| err(line_no, e))?,
                    "reason" => reason = val.to_string(),
                    other => return Err(err(line_no, format!("unknown verdict key {other:?}"))),
                }
            }
            _ => return Err(err(line_no, "content before any section header")),
        }
    }

    for required in ["config", "scripts", "directives", "history", "verdicts"] {
        if !seen_sections.contains(&required) {
            return Err(ParseError::Truncated(match required {
                "config" => "config",
                "scripts" => "scripts",
                "directives" => "directives",
                "history" => "history",
                _ => "verdicts",
            }));
        }
    }

    let kind = object.ok_or(ParseError::Truncated("config"))?;
    let mut obj = ObjectConfig::new(kind, n);
    obj = obj.with_domain(domain);
    obj.v_init = v_init;
    obj.value_bits = value_bits;
    obj.reuse_initial_toggle = reuse_initial_toggle;
    let cfg = SystemConfig {
        object: obj,
        mutation,
        caller_policy,
        record_accesses: false,
    };
    Ok((
        cfg,
        Counterexample {
            schedule: Schedule::new(scripts, directives),
            history,
            durable,
            detectable,
            reason,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::ObjectConfig;

    fn sample() -> (SystemConfig, Counterexample) {
        let cfg = SystemConfig::new(ObjectConfig::new(ObjectKind::CasDetect, 2))
            .with_mutation(Some(Mutation::CasSkipCp1));
        let cex = Counterexample {
            schedule: Schedule::new(
                vec![
                    vec![OpDescriptor::Cas { old: 0, new: 1 }],
                    vec![OpDescriptor::Read],
                ],
                vec![
                    Directive::Step(0),
                    Directive::Crash,
                    Directive::RecoverStep(0),
                ],
            ),
            history: History {
                events: vec![HistoryEvent {
                    seq: 0,
                    kind: EventKind::Invoke,
                    pid: Some(0),
                    instance: Some(InstanceId { pid: 0, ordinal: 0 }),
                    descriptor: Some(OpDescriptor::Cas { old: 0, new: 1 }),
                    value: None,
                }],
            },
            durable: Verdict::Pass,
            detectable: Verdict::Fail,
            reason: "no admissible linearization survives the event at seq 9".into(),
        };
        (cfg, cex)
    }

    #[test]
    fn counterexample_roundtrip() {
        let (cfg, cex) = sample();
        let text = render_counterexample(&cfg, &cex);
        let (cfg2, cex2) = parse_counterexample(&text).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(cex, cex2);
        assert_eq!(text, render_counterexample(&cfg2, &cex2));
    }

    #[test]
    fn truncated_file_names_missing_section() {
        let (cfg, cex) = sample();
        let text = render_counterexample(&cfg, &cex);
        let cut = text.split("[history]").next().unwrap();
        assert!(matches!(
            parse_counterexample(cut),
            Err(ParseError::Truncated(_))
        ));
    }

    #[test]
    fn parse_error_names_the_line() {
        let (cfg, cex) = sample();
        let mut text = render_counterexample(&cfg, &cex);
        text = text.replace("step 0", "step zero");
        match parse_counterexample(&text) {
            Err(ParseError::At { line, .. }) => assert!(line > 1),
            other => panic!("expected positioned error, got {other:?}"),
        }
    }

    #[test]
    fn descriptor_text_roundtrip() {
        for d in [
            OpDescriptor::Read,
            OpDescriptor::Write(3),
            OpDescriptor::Cas { old: 1, new: 2 },
            OpDescriptor::WriteMax(9),
            OpDescriptor::Increment,
            OpDescriptor::FetchAdd(1),
            OpDescriptor::Enqueue(0),
            OpDescriptor::Dequeue,
        ] {
            assert_eq!(parse_descriptor(&render_descriptor(&d)).unwrap(), d);
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        assert!(matches!(
            parse_counterexample("#detectable-counterexample v9\n"),
            Err(ParseError::Version(_))
        ));
    }
}
