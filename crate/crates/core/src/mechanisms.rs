//! Fault-tolerance mechanisms as pure functions: the two-round
//! TestPortAbsolute vote, the liveness-beacon test, the redundancy-trigger
//! state machine, fault-abstraction propagation through opaque tasks, median
//! unification, and small-scope interval evaluation.
//!
//! Models use these through the expression builtins; they are kept pure so
//! single-fault scenarios can be checked exhaustively in isolation.

use crate::pattern::CExpr;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MechanismError {
    #[error("median needs an odd number of values, got {0}")]
    EvenMedian(usize),
    #[error("interval evaluation does not support calls ({0})")]
    CallInInterval(&'static str),
    #[error("interval domain product {0} exceeds enumeration cap {1}")]
    DomainTooLarge(u64, u64),
}

/// Final per-machine verdicts of a vote: `faulty[m]` is machine `m+1`'s
/// judged-faulty flag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FaultStatusVector {
    pub faulty: Vec<bool>,
}

impl FaultStatusVector {
    pub fn faulty_set(&self) -> BTreeSet<usize> {
        self.faulty
            .iter()
            .enumerate()
            .filter_map(|(m, f)| f.then_some(m))
            .collect()
    }

    pub fn to_value(&self) -> Value {
        Value::Tuple(
            self.faulty
                .iter()
                .map(|f| Value::Int(i64::from(*f)))
                .collect(),
        )
    }

    /// Decodes a `(0|1, ...)` tuple of length `n`; anything else is not a
    /// status vector.
    pub fn from_value(value: &Value, n: usize) -> Option<FaultStatusVector> {
        let Value::Tuple(items) = value else {
            return None;
        };
        if items.len() != n {
            return None;
        }
        let mut faulty = Vec::with_capacity(n);
        for item in items {
            match item {
                Value::Int(0) => faulty.push(false),
                Value::Int(1) => faulty.push(true),
                _ => return None,
            }
        }
        Some(FaultStatusVector { faulty })
    }
}

/// First round of TestPortAbsolute on one machine: compare every received
/// copy with the local value; a sender whose copy differs, or from which no
/// value was received, is judged faulty. The machine trusts itself.
pub fn test_port_absolute_round1(
    n: usize,
    own_machine: usize,
    own: &Value,
    received: &BTreeMap<usize, Option<Value>>,
) -> FaultStatusVector {
    let mut faulty = vec![false; n];
    for (m, flag) in faulty.iter_mut().enumerate() {
        if m == own_machine {
            continue;
        }
        *flag = match received.get(&m) {
            Some(Some(v)) => v != own,
            Some(None) | None => true,
        };
    }
    FaultStatusVector { faulty }
}

/// Second round: strict-majority vote over the exchanged judgment arrays.
/// A missing array counts as an all-faulty opinion so a silent machine
/// cannot stall the vote.
pub fn test_port_absolute_round2(
    n: usize,
    opinions: &BTreeMap<usize, Option<FaultStatusVector>>,
) -> FaultStatusVector {
    let mut faulty = vec![false; n];
    for (m, flag) in faulty.iter_mut().enumerate() {
        let mut votes = 0usize;
        for voter in 0..n {
            let vote = match opinions.get(&voter) {
                Some(Some(array)) => array.faulty.get(m).copied().unwrap_or(true),
                Some(None) | None => true,
            };
            if vote {
                votes += 1;
            }
        }
        *flag = votes * 2 > n;
    }
    FaultStatusVector { faulty }
}

/// Per-period liveness test: a machine is judged faulty iff its beacon is
/// absent or does not carry the locally expected value.
pub fn test_liveness(
    n: usize,
    own_machine: usize,
    expected: &Value,
    received: &BTreeMap<usize, Option<Value>>,
) -> FaultStatusVector {
    let mut faulty = vec![false; n];
    for (m, flag) in faulty.iter_mut().enumerate() {
        if m == own_machine {
            continue;
        }
        *flag = match received.get(&m) {
            Some(Some(v)) => v != expected,
            Some(None) | None => true,
        };
    }
    FaultStatusVector { faulty }
}

/// The redundancy trigger: which machine is responsible for producing the
/// output, as a function of the detected fault configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TriggerState {
    /// 0-based responsible machine; `None` marks a fault configuration the
    /// model does not declare (e.g. two machines judged faulty), surfaced to
    /// the checker as a distinguished state.
    pub responsible: Option<usize>,
}

impl TriggerState {
    pub fn to_value(&self) -> Value {
        match self.responsible {
            Some(m) => Value::Int(m as i64 + 1),
            None => Value::Int(0),
        }
    }
}

/// Transition table from detected fault configurations (sets of judged-faulty
/// machines) to the responsible machine. Configurations with at most one
/// faulty machine default to the lowest-indexed non-faulty machine, which
/// reproduces the TMR demo table: all-correct -> 1, {1} -> 2, {2} -> 1,
/// {3} -> 1. Everything else is undefined unless explicitly mapped.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriggerTable {
    pub overrides: BTreeMap<BTreeSet<usize>, usize>,
}

impl TriggerTable {
    pub fn lookup(&self, statuses: &FaultStatusVector) -> TriggerState {
        let faulty = statuses.faulty_set();
        if let Some(&m) = self.overrides.get(&faulty) {
            return TriggerState {
                responsible: Some(m),
            };
        }
        if faulty.len() <= 1 {
            let responsible = (0..statuses.faulty.len()).find(|m| !faulty.contains(m));
            return TriggerState { responsible };
        }
        TriggerState { responsible: None }
    }
}

/// One step of the trigger state machine.
pub fn redundancy_trigger(
    _state: &TriggerState,
    statuses: &FaultStatusVector,
    table: &TriggerTable,
) -> TriggerState {
    table.lookup(statuses)
}

/// Which outputs of a task depend on which inputs. Outputs without an entry
/// conservatively depend on every input.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskImplicationGraph {
    pub deps: BTreeMap<String, BTreeSet<String>>,
}

impl TaskImplicationGraph {
    pub fn depends_on(&self, output: &str, input: &str) -> bool {
        match self.deps.get(output) {
            Some(inputs) => inputs.contains(input),
            None => true,
        }
    }
}

/// Fault-abstraction propagation through an opaque task: an output is
/// erroneous iff some input it depends on is erroneous. Without an
/// implication graph every output depends on every input.
pub fn propagate_fault_abstraction(
    outputs: &[String],
    inputs: &BTreeMap<String, Value>,
    implication: Option<&TaskImplicationGraph>,
) -> BTreeMap<String, Value> {
    outputs
        .iter()
        .map(|out| {
            let erroneous = inputs.iter().any(|(name, value)| {
                value.is_erroneous() && implication.is_none_or(|g| g.depends_on(out, name))
            });
            let value = if erroneous {
                Value::Erroneous
            } else {
                Value::Correct
            };
            (out.clone(), value)
        })
        .collect()
}

/// Median of `own` and the received copies under the value order
/// (`Correct < Erroneous`, integers by value). The count must be odd.
pub fn median_unify(own: &Value, received: &[Value]) -> Result<Value, MechanismError> {
    let mut all: Vec<Value> = Vec::with_capacity(received.len() + 1);
    all.push(own.clone());
    all.extend(received.iter().cloned());
    if all.len().is_multiple_of(2) {
        return Err(MechanismError::EvenMedian(all.len()));
    }
    all.sort();
    Ok(all[all.len() / 2].clone())
}

/// Result of small-scope interval evaluation: either the exact reachable
/// value set, or top when a division by zero makes the result unconstrained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalResult {
    Values(BTreeSet<i64>),
    Top,
}

/// Exact enumeration of an expression over finite per-leaf integer ranges.
/// Slot leaves are keyed `(var, slot)`, env leaves by env id; every leaf the
/// expression mentions must have a range. Enumeration refuses domains whose
/// product exceeds `cap`.
pub fn eval_interval(
    expr: &CExpr,
    slots: &BTreeMap<(crate::pattern::VarId, usize), (i64, i64)>,
    env: &BTreeMap<crate::pattern::EnvId, (i64, i64)>,
    cap: u64,
) -> Result<IntervalResult, MechanismError> {
    let mut leaves: Vec<Leaf> = Vec::new();
    collect_leaves(expr, &mut leaves)?;
    leaves.sort();
    leaves.dedup();

    let mut total: u64 = 1;
    let mut ranges = Vec::with_capacity(leaves.len());
    for leaf in &leaves {
        let (lo, hi) = match leaf {
            Leaf::Slot(var, slot) => *slots.get(&(*var, *slot)).unwrap_or(&(0, 0)),
            Leaf::Env(id) => *env.get(id).unwrap_or(&(0, 0)),
        };
        let size = (hi - lo + 1).max(0) as u64;
        total = total.saturating_mul(size.max(1));
        if total > cap {
            return Err(MechanismError::DomainTooLarge(total, cap));
        }
        ranges.push((lo, hi));
    }

    let mut out = BTreeSet::new();
    let mut assignment: Vec<i64> = ranges.iter().map(|(lo, _)| *lo).collect();
    loop {
        let valuation: BTreeMap<Leaf, i64> = leaves
            .iter()
            .cloned()
            .zip(assignment.iter().copied())
            .collect();
        match eval_concrete(expr, &valuation) {
            Value::Int(v) => {
                out.insert(v);
            }
            // division by zero somewhere in the domain: the result is
            // unconstrained, report top
            _ => return Ok(IntervalResult::Top),
        }
        // advance the odometer
        let mut pos = assignment.len();
        loop {
            if pos == 0 {
                return Ok(IntervalResult::Values(out));
            }
            pos -= 1;
            if assignment[pos] < ranges[pos].1 {
                assignment[pos] += 1;
                for later in pos + 1..assignment.len() {
                    assignment[later] = ranges[later].0;
                }
                break;
            }
        }
        if assignment.is_empty() {
            return Ok(IntervalResult::Values(out));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Leaf {
    Slot(crate::pattern::VarId, usize),
    Env(crate::pattern::EnvId),
}

fn collect_leaves(expr: &CExpr, out: &mut Vec<Leaf>) -> Result<(), MechanismError> {
    match expr {
        CExpr::Const(_) => Ok(()),
        CExpr::Env(id) => {
            out.push(Leaf::Env(*id));
            Ok(())
        }
        CExpr::Slot { var, slot } => {
            out.push(Leaf::Slot(*var, *slot));
            Ok(())
        }
        CExpr::Add(a, b) | CExpr::Mul(a, b) | CExpr::Div(a, b) => {
            collect_leaves(a, out)?;
            collect_leaves(b, out)
        }
        CExpr::Neg(a) => collect_leaves(a, out),
        CExpr::Call { builtin, .. } => Err(MechanismError::CallInInterval(builtin.name())),
    }
}

fn eval_concrete(expr: &CExpr, valuation: &BTreeMap<Leaf, i64>) -> Value {
    match expr {
        CExpr::Const(v) => v.clone(),
        CExpr::Env(id) => Value::Int(valuation[&Leaf::Env(*id)]),
        CExpr::Slot { var, slot } => Value::Int(valuation[&Leaf::Slot(*var, *slot)]),
        CExpr::Add(a, b) => eval_concrete(a, valuation).add(&eval_concrete(b, valuation)),
        CExpr::Mul(a, b) => eval_concrete(a, valuation).mul(&eval_concrete(b, valuation)),
        CExpr::Div(a, b) => eval_concrete(a, valuation).div(&eval_concrete(b, valuation)),
        CExpr::Neg(a) => eval_concrete(a, valuation).neg(),
        CExpr::Call { .. } => Value::Error,
    }
}
