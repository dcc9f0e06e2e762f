//! Trace algebra: labeled execution traces, projection onto one machine,
//! stutter removal and equivalence, valid-receive classification, and
//! counterexample pruning.
//!
//! Projection keeps exactly one machine's array values and next-action
//! cursor; queues and environment variables are erased, matching the atom
//! vocabulary of local properties.

use crate::pattern::{ActionKind, ActionTemplate, VarId};
use crate::semantics::{EnvChoice, SystemConfig};
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// In a synchronized send step, which of several same-tagged messages ends
/// up last in a queue (arises only under masquerade faults).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CollisionWinner {
    pub queue: usize,
    pub var: VarId,
    pub slot: usize,
    /// The machine that physically sent the winning message.
    pub sender: usize,
}

/// Label between two consecutive trace snapshots.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepLabel {
    /// One machine executed its next action (asynchronous interleavings).
    Micro {
        machine: usize,
        position: usize,
        /// Index of the actuating fault in the model's fault list, if any.
        fault: Option<usize>,
    },
    /// Every machine executed the same position simultaneously
    /// (the synchronized verification model).
    Composite {
        position: usize,
        /// Actuating faults as (machine, fault index), ascending.
        faults: Vec<(usize, usize)>,
        /// Resolved message-order collisions of this step.
        winners: Vec<CollisionWinner>,
    },
    /// The global periodic jump with its environment choice; `location` is
    /// the fault-automaton location entered for the next period.
    Jump {
        choice: EnvChoice,
        location: Option<usize>,
    },
}

impl StepLabel {
    pub fn is_jump(&self) -> bool {
        matches!(self, StepLabel::Jump { .. })
    }

    pub fn has_fault(&self) -> bool {
        match self {
            StepLabel::Micro { fault, .. } => fault.is_some(),
            StepLabel::Composite { faults, .. } => !faults.is_empty(),
            StepLabel::Jump { .. } => false,
        }
    }
}

/// A labeled execution trace: `snapshots[i] --labels[i]--> snapshots[i+1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub snapshots: Vec<SystemConfig>,
    pub labels: Vec<StepLabel>,
    /// Number of complete periods the trace spans.
    pub periods: usize,
    /// Pruned traces keep only a subsequence of snapshots; consecutive
    /// snapshots are then no longer related by exactly one step.
    pub pruned: bool,
}

impl Trace {
    pub fn new(initial: SystemConfig) -> Trace {
        Trace {
            snapshots: vec![initial],
            labels: Vec::new(),
            periods: 0,
            pruned: false,
        }
    }

    pub fn push(&mut self, label: StepLabel, config: SystemConfig) {
        if label.is_jump() {
            self.periods += 1;
        }
        self.labels.push(label);
        self.snapshots.push(config);
    }

    pub fn last(&self) -> &SystemConfig {
        self.snapshots
            .last()
            .expect("trace holds at least one snapshot")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One machine's view of a configuration: its array copies and cursor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProjectedState {
    pub values: Vec<Vec<Value>>,
    pub next: Option<usize>,
}

impl ProjectedState {
    pub fn of(config: &SystemConfig, machine: usize) -> ProjectedState {
        let state = &config.machines[machine];
        ProjectedState {
            values: state.values.clone(),
            next: state.next,
        }
    }

    pub fn next_value(&self) -> Value {
        Value::Int(self.next.map(|p| p as i64 + 1).unwrap_or(0))
    }
}

/// Pointwise projection of a trace onto one machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectedTrace {
    pub machine: usize,
    pub states: Vec<ProjectedState>,
}

pub fn project(trace: &Trace, machine: usize) -> ProjectedTrace {
    ProjectedTrace {
        machine,
        states: trace
            .snapshots
            .iter()
            .map(|c| ProjectedState::of(c, machine))
            .collect(),
    }
}

impl ProjectedTrace {
    pub fn destuttered(&self) -> Vec<ProjectedState> {
        destutter(&self.states)
    }
}

/// Stutter removal: replaces every run of identical elements by one element.
pub fn destutter<T: PartialEq + Clone>(word: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for item in word {
        if out.last() != Some(item) {
            out.push(item.clone());
        }
    }
    out
}

/// Two words are stutter equivalent iff their destuttered forms coincide.
pub fn stutter_equiv<T: PartialEq + Clone>(a: &[T], b: &[T]) -> bool {
    destutter(a) == destutter(b)
}

/// Classifies the receive actions of a sequence: position `k1` is valid iff
/// a send of the same array occurs earlier and the latest such send is no
/// earlier than the latest earlier receive of that array (the virtual null
/// action at position 0 counts for both maxima). Invalid receives are
/// effective no-ops.
pub fn classify_valid_receives(actions: &[ActionTemplate]) -> BTreeSet<usize> {
    let mut valid = BTreeSet::new();
    for (k1, action) in actions.iter().enumerate() {
        let ActionTemplate::Receive { var } = action else {
            continue;
        };
        let mut send_max = 0usize; // 1-based positions, 0 = null
        let mut rec_max = 0usize;
        let mut has_send = false;
        for (pos, earlier) in actions[..k1].iter().enumerate() {
            if earlier.var() != *var {
                continue;
            }
            match earlier.kind() {
                ActionKind::Send => {
                    send_max = pos + 1;
                    has_send = true;
                }
                ActionKind::Receive => rec_max = pos + 1,
                ActionKind::Assign => {}
            }
        }
        if has_send && send_max >= rec_max {
            valid.insert(k1);
        }
    }
    valid
}

/// All receive positions of a sequence, for pairing with the classification.
pub fn receive_positions(actions: &[ActionTemplate]) -> BTreeSet<usize> {
    actions
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind() == ActionKind::Receive)
        .map(|(i, _)| i)
        .collect()
}

/// Prunes a counterexample down to the steps where the given machine's
/// projection changes, keeping fault-actuation and global-jump labels as
/// markers. The destuttered projection is unchanged by construction.
pub fn prune_counterexample(trace: &Trace, machine: usize) -> Trace {
    let mut snapshots = vec![trace.snapshots[0].clone()];
    let mut labels = Vec::new();
    for (i, label) in trace.labels.iter().enumerate() {
        let before = ProjectedState::of(&trace.snapshots[i], machine);
        let after = ProjectedState::of(&trace.snapshots[i + 1], machine);
        if before != after || label.is_jump() || label.has_fault() {
            labels.push(label.clone());
            snapshots.push(trace.snapshots[i + 1].clone());
        }
    }
    Trace {
        snapshots,
        labels,
        periods: trace.periods,
        pruned: true,
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn small_words() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..4, 0..24)
    }

    proptest! {
        #[test]
        fn destutter_is_idempotent(word in small_words()) {
            let once = destutter(&word);
            let twice = destutter(&once);
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn destutter_has_no_adjacent_repeats(word in small_words()) {
            let out = destutter(&word);
            prop_assert!(out.windows(2).all(|w| w[0] != w[1]));
        }

        #[test]
        fn stutter_equiv_is_reflexive_and_symmetric(a in small_words(), b in small_words()) {
            prop_assert!(stutter_equiv(&a, &a));
            prop_assert_eq!(stutter_equiv(&a, &b), stutter_equiv(&b, &a));
        }

        #[test]
        fn stutter_equiv_is_transitive(a in small_words(), b in small_words(), c in small_words()) {
            if stutter_equiv(&a, &b) && stutter_equiv(&b, &c) {
                prop_assert!(stutter_equiv(&a, &c));
            }
        }

        #[test]
        fn duplicating_letters_preserves_the_class(word in small_words(), dup_at in any::<proptest::sample::Index>()) {
            if !word.is_empty() {
                let at = dup_at.index(word.len());
                let mut stuttered = word.clone();
                stuttered.insert(at, word[at]);
                prop_assert!(stutter_equiv(&word, &stuttered));
            }
        }
    }
}
