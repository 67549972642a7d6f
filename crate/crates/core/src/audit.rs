//! Space accounting and the reachable-memory-state auditor.
//!
//! The space audit is analytic: it sums the declared bit widths of an
//! object's shared cells. The state auditor explores schedules breadth-first
//! — announcing any state-changing operation on any idle process, stepping
//! machines, injecting crashes within a budget — and counts distinct shared
//! memory images. Any finite exploration yields a sound lower bound on the
//! number of reachable configurations no two of which are memory-equivalent.

use crate::objects::{ObjectConfig, ObjectKind};
use crate::system::{RunError, System, SystemConfig};
use crate::value::OpDescriptor;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};

/// Shared bits an object instance declares, as a function of the value width.
pub fn space_bits(kind: ObjectKind, n: usize, value_bits: u64) -> u64 {
    let mut cfg = ObjectConfig::new(kind, n);
    cfg.value_bits = value_bits;
    let alg = cfg.build(None).expect("default configs are valid");
    alg.layout().shared_bits()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCountConfig {
    /// Maximum scheduler steps per schedule.
    pub depth: usize,
    /// Cap on distinct simulator states explored; hitting it (or the depth)
    /// makes the result a lower bound, reported via `exhausted = false`.
    pub max_states: u64,
    pub max_crashes: usize,
    /// Compare private cells too, not just shared ones.
    pub include_private: bool,
    /// Run operations one at a time (`at most one process non-idle`). Still
    /// a sound lower bound, and for the CAS object it loses nothing: its one
    /// shared cell changes only through the atomic CAS step, whose effect
    /// depends only on the cell's current content, so contended schedules
    /// reach exactly the images solo schedules reach.
    pub solo: bool,
}

impl Default for StateCountConfig {
    fn default() -> Self {
        StateCountConfig {
            depth: 40,
            max_states: 2_000_000,
            max_crashes: 1,
            include_private: false,
            solo: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCountReport {
    pub distinct_images: u64,
    pub states_explored: u64,
    /// True when the exploration closed (no state was cut by a cap), so the
    /// count is exact for the given depth rather than a lower bound.
    pub exhausted: bool,
}

/// Operations that can change shared memory. Read-only operations never
/// write a shared cell and never influence another process's steps, so
/// dropping them from the announcement alphabet loses no reachable image.
fn mutating_alphabet(cfg: &ObjectConfig) -> Vec<OpDescriptor> {
    cfg.alphabet()
        .into_iter()
        .filter(|op| !matches!(op, OpDescriptor::Read))
        .collect()
}

/// Counts distinct reachable shared-memory images by BFS over schedules.
pub fn enumerate_memory_states(
    object: &ObjectConfig,
    c: &StateCountConfig,
) -> Result<StateCountReport, RunError> {
    let sys_cfg = SystemConfig::new(object.clone());
    let alphabet = mutating_alphabet(object);
    let root = System::new(&sys_cfg, vec![Vec::new(); object.n])?;

    let mut images: HashSet<Vec<u8>> = HashSet::new();
    let mut visited: HashSet<Vec<u8>> = HashSet::new();
    let mut queue: VecDeque<(System, usize)> = VecDeque::new();
    let mut exhausted = true;

    let image_key = |sys: &System| {
        if c.include_private {
            let mut k = Vec::new();
            sys.mem.push_key(&mut k);
            k
        } else {
            sys.mem.shared_key()
        }
    };

    images.insert(image_key(&root));
    visited.insert(root.state_key());
    queue.push_back((root, 0));

    while let Some((sys, depth)) = queue.pop_front() {
        if visited.len() as u64 >= c.max_states {
            exhausted = false;
            break;
        }
        if depth >= c.depth {
            exhausted = false;
            continue;
        }
        let busy: Vec<usize> = (0..sys.n())
            .filter(|&p| sys.can_step(p) || sys.can_recover(p))
            .collect();
        let mut children: Vec<System> = Vec::new();
        for p in 0..sys.n() {
            if c.solo && !busy.is_empty() && !busy.contains(&p) {
                continue;
            }
            if sys.can_recover(p) {
                let mut child = sys.clone();
                child
                    .apply(crate::schedule::Directive::RecoverStep(p))
                    .expect("recover step applies");
                children.push(child);
            } else if sys.can_step(p) {
                let mut child = sys.clone();
                child
                    .apply(crate::schedule::Directive::Step(p))
                    .expect("step applies");
                children.push(child);
            } else {
                // Idle with nothing scripted: announce each candidate op.
                for &desc in &alphabet {
                    let mut child = sys.clone();
                    child
                        .announce_external(p, desc)
                        .expect("announce on idle process");
                    children.push(child);
                }
            }
        }
        if sys.crashes < c.max_crashes {
            let mut child = sys.clone();
            child
                .apply(crate::schedule::Directive::Crash)
                .expect("crash always applies");
            children.push(child);
        }
        for child in children {
            let key = child.state_key();
            if visited.insert(key) {
                images.insert(image_key(&child));
                queue.push_back((child, depth + 1));
            }
        }
    }

    Ok(StateCountReport {
        distinct_images: images.len() as u64,
        states_explored: visited.len() as u64,
        exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_formulas_from_declared_layouts() {
        // cas: value_bits + N
        assert_eq!(space_bits(ObjectKind::CasDetect, 8, 4), 12);
        // reg: value_bits + ceil(log2 N) + 1 + 2 N^2
        assert_eq!(space_bits(ObjectKind::RegDetect, 2, 2), 2 + 1 + 1 + 8);
        // maxreg: N * value_bits
        assert_eq!(space_bits(ObjectKind::MaxReg, 1, 3), 3);
    }

    #[test]
    fn maxreg_single_process_two_images() {
        let mut object = ObjectConfig::new(ObjectKind::MaxReg, 1);
        object = object.with_domain(vec![0, 1]);
        let report = enumerate_memory_states(
            &object,
            &StateCountConfig {
                depth: 12,
                max_crashes: 0,
                ..Default::default()
            },
        )
        .unwrap();
        // MR = [0] and MR = [1]
        assert_eq!(report.distinct_images, 2);
    }
}
