//! Bounded search for doubly-perturbing witnesses over sequential
//! specifications.
//!
//! An operation perturbs another when inserting it changes the other's
//! response. An object is doubly-perturbing when some operation by a process
//! `p` perturbs after a history `H1`, and after extending
//! `H1 ∘ op_p ∘ op'` by a `p`-free suffix, a second instance of the same
//! operation perturbs again. Detectable recoverable implementations of such
//! objects provably need externally supplied auxiliary state, which is why
//! the harness's mutation tests delete exactly those writes.
//!
//! The search is exhaustive within a history-length bound and canonical in
//! its enumeration order, so its output is deterministic and diffable. A
//! `None` result only ever means the bounded space is exhausted, never a
//! proof of non-existence.

use crate::seqspec::SeqSpecKind;
use crate::value::{OpDescriptor, Response};
use serde::{Deserialize, Serialize};

/// One event of a sequential history: an operation by a process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqEvent {
    pub pid: usize,
    pub op: OpDescriptor,
}

impl SeqEvent {
    fn ops(events: &[SeqEvent]) -> Vec<OpDescriptor> {
        events.iter().map(|e| e.op).collect()
    }
}

/// A verified doubly-perturbing witness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    /// The witnessing operation, performed by process `PID_P`.
    pub op_p: OpDescriptor,
    pub h1: Vec<SeqEvent>,
    /// The operation perturbed after `h1`, and its two responses
    /// (without and with `op_p` in front of it).
    pub op_prime1: SeqEvent,
    pub responses1: (Response, Response),
    /// The `p`-free extension after `h1 ∘ op_p ∘ op_prime1`.
    pub extension: Vec<SeqEvent>,
    /// The operation perturbed after the extended history by a second
    /// instance of `op_p`, and its two responses.
    pub op_prime2: SeqEvent,
    pub responses2: (Response, Response),
}

impl Witness {
    /// The full perturbed history `h1 ∘ op_p ∘ op_prime1 ∘ extension`.
    pub fn h2(&self) -> Vec<SeqEvent> {
        let mut h = self.h1.clone();
        h.push(SeqEvent {
            pid: PID_P,
            op: self.op_p,
        });
        h.push(self.op_prime1);
        h.extend(self.extension.iter().copied());
        h
    }
}

/// Search configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    /// Maximum length of the perturbed history `h2`.
    pub history_bound: usize,
    /// Separate cap on the extension suffix.
    pub extension_bound: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            history_bound: 6,
            extension_bound: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchResult {
    Found(Box<Witness>),
    /// The bounded space is exhausted; says nothing beyond the bound.
    ExhaustedAtBound(SearchBounds),
}

/// Processes are interchangeable in sequential specifications, so the search
/// fixes the witnessing process and one opponent.
pub const PID_P: usize = 0;
pub const PID_Q: usize = 1;

/// Does `op_a` (by another process) change `op_b`'s response after `h`?
pub fn is_perturbing_after(
    spec: SeqSpecKind,
    h: &[OpDescriptor],
    op_a: OpDescriptor,
    op_b: OpDescriptor,
) -> bool {
    let mut with: Vec<OpDescriptor> = h.to_vec();
    with.push(op_a);
    with.push(op_b);
    let mut without: Vec<OpDescriptor> = h.to_vec();
    without.push(op_b);
    let r_with = *spec.replay(&with).last().expect("non-empty replay");
    let r_without = *spec.replay(&without).last().expect("non-empty replay");
    r_with != r_without
}

fn responses_around(
    spec: SeqSpecKind,
    h: &[OpDescriptor],
    op_a: OpDescriptor,
    op_b: OpDescriptor,
) -> (Response, Response) {
    let mut with: Vec<OpDescriptor> = h.to_vec();
    with.push(op_a);
    with.push(op_b);
    let mut without: Vec<OpDescriptor> = h.to_vec();
    without.push(op_b);
    (
        *spec.replay(&without).last().unwrap(),
        *spec.replay(&with).last().unwrap(),
    )
}

/// Enumerates histories of exactly `len` events over `alphabet`, each event
/// attributed to one of the given pids, in lexicographic order.
fn histories(
    alphabet: &[OpDescriptor],
    pids: &[usize],
    len: usize,
) -> Box<dyn Iterator<Item = Vec<SeqEvent>>> {
    let mut iter: Box<dyn Iterator<Item = Vec<SeqEvent>>> = Box::new(std::iter::once(Vec::new()));
    for _ in 0..len {
        let alphabet = alphabet.to_vec();
        let pids = pids.to_vec();
        iter = Box::new(iter.flat_map(move |h| {
            let alphabet = alphabet.clone();
            let pids = pids.clone();
            pids.into_iter().flat_map(move |pid| {
                let h = h.clone();
                alphabet
                    .clone()
                    .into_iter()
                    .map(move |op| {
                        let mut h = h.clone();
                        h.push(SeqEvent { pid, op });
                        h
                    })
                    .collect::<Vec<_>>()
            })
        }));
    }
    iter
}

/// Breadth-first over `(h1, op_p, op_prime1, extension, op_prime2)` in
/// canonical order: histories by length then lexicographic descriptor order.
/// The first witness found is re-verified by direct replay before returning.
pub fn search_doubly_perturbing(
    spec: SeqSpecKind,
    domain: &[i64],
    bounds: SearchBounds,
) -> SearchResult {
    let alphabet = spec.alphabet(domain);
    // |h2| = |h1| + 2 + |extension| <= history_bound
    for h1_len in 0..=bounds.history_bound.saturating_sub(2) {
        for h1 in histories(&alphabet, &[PID_P, PID_Q], h1_len) {
            let h1_ops = SeqEvent::ops(&h1);
            for &op_p in &alphabet {
                for &op_prime1 in &alphabet {
                    if !is_perturbing_after(spec, &h1_ops, op_p, op_prime1) {
                        continue;
                    }
                    let responses1 = responses_around(spec, &h1_ops, op_p, op_prime1);
                    let mut prefix = h1_ops.clone();
                    prefix.push(op_p);
                    prefix.push(op_prime1);
                    let ext_max = bounds
                        .extension_bound
                        .min(bounds.history_bound - h1_len - 2);
                    for ext_len in 0..=ext_max {
                        for ext in histories(&alphabet, &[PID_Q], ext_len) {
                            let mut h2_ops = prefix.clone();
                            h2_ops.extend(SeqEvent::ops(&ext));
                            for &op_prime2 in &alphabet {
                                if !is_perturbing_after(spec, &h2_ops, op_p, op_prime2) {
                                    continue;
                                }
                                let responses2 = responses_around(spec, &h2_ops, op_p, op_prime2);
                                let witness = Witness {
                                    op_p,
                                    h1: h1.clone(),
                                    op_prime1: SeqEvent {
                                        pid: PID_Q,
                                        op: op_prime1,
                                    },
                                    responses1,
                                    extension: ext.clone(),
                                    op_prime2: SeqEvent {
                                        pid: PID_Q,
                                        op: op_prime2,
                                    },
                                    responses2,
                                };
                                assert!(
                                    verify_witness(spec, &witness),
                                    "search produced an unverifiable witness"
                                );
                                return SearchResult::Found(Box::new(witness));
                            }
                        }
                    }
                }
            }
        }
    }
    SearchResult::ExhaustedAtBound(bounds)
}

/// Independent replay of both conditions of a witness.
pub fn verify_witness(spec: SeqSpecKind, w: &Witness) -> bool {
    let h1_ops = SeqEvent::ops(&w.h1);
    let cond1 = is_perturbing_after(spec, &h1_ops, w.op_p, w.op_prime1.op)
        && responses_around(spec, &h1_ops, w.op_p, w.op_prime1.op) == w.responses1
        && w.responses1.0 != w.responses1.1;
    let h2_ops = SeqEvent::ops(&w.h2());
    let cond2 = is_perturbing_after(spec, &h2_ops, w.op_p, w.op_prime2.op)
        && responses_around(spec, &h2_ops, w.op_p, w.op_prime2.op) == w.responses2
        && w.responses2.0 != w.responses2.1;
    let extension_p_free = w.extension.iter().all(|e| e.pid != PID_P);
    cond1 && cond2 && extension_p_free
}
