//! The fault engine: 8-tuple fault specifications, the tick-level fault
//! automaton that activates them, least-time-between-failure budgeting, and
//! effect-indistinguishability of actuating fault sequences.
//!
//! Clocks and invariants of the timed fault automaton are abstracted to tick
//! counts: the automaton takes one step per global period. The abstraction
//! over-approximates, so a spurious counterexample is still a run the system
//! cannot defend against.

use crate::semantics::{GCASystem, Perturbation, Psi, SemanticsError, SystemConfig};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultType {
    WrongResult,
    FailSilent,
    MessageLoss,
    Corruption,
    Masquerade,
}

impl std::fmt::Display for FaultType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FaultType::WrongResult => write!(f, "wrong-result"),
            FaultType::FailSilent => write!(f, "fail-silent"),
            FaultType::MessageLoss => write!(f, "message-loss"),
            FaultType::Corruption => write!(f, "corruption"),
            FaultType::Masquerade => write!(f, "masquerade"),
        }
    }
}

/// One fault: its activation flag, effect type, the action instance it
/// attaches to (machine `machine`, sequence position `position`), the machine
/// parameters `k`/`k_prime`, and the error function `psi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// Activation flag name; the automaton's labeling ranges over these.
    pub act: String,
    pub fault_type: FaultType,
    /// Target machine `i`, 0-based.
    pub machine: usize,
    /// Position `j` in the action sequence, 0-based.
    pub position: usize,
    /// Receiver parameter of message-loss and corruption faults, 0-based.
    pub k: Option<usize>,
    /// Receiver/claimed-sender parameter of masquerade faults, 0-based.
    pub k_prime: Option<usize>,
    pub psi: Psi,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultError {
    #[error("fault `{act}` ({fault_type}) attaches to a {found} action at machine {machine} position {position}, which is incompatible")]
    IncompatibleAction {
        act: String,
        fault_type: FaultType,
        machine: usize,
        position: usize,
        found: crate::pattern::ActionKind,
    },
    #[error("fault `{act}` targets machine {machine} outside 1..={n}")]
    MachineOutOfRange {
        act: String,
        machine: usize,
        n: usize,
    },
    #[error("fault `{act}` attaches to position {position} outside 1..={k}")]
    PositionOutOfRange {
        act: String,
        position: usize,
        k: usize,
    },
    #[error("fault `{act}` needs parameter {param}")]
    MissingParameter { act: String, param: &'static str },
    #[error("fault `{act}`: parameter {param} must name a machine other than the sender")]
    SelfParameter { act: String, param: &'static str },
    #[error("location `{0}` activates two faults on the same action instance")]
    ConflictingFaults(String),
    #[error("unknown automaton location {0}")]
    UnknownLocation(usize),
    #[error("automaton has no initial location")]
    NoInitialLocation,
    #[error("edge references unknown location {0}")]
    DanglingEdge(usize),
    #[error(
        "location `{name}` activates {fired} faults in one period, over the LTBF budget of {cap}"
    )]
    OverBudget {
        name: String,
        fired: usize,
        cap: u64,
    },
    #[error("fault `{act}` is not enabled at machine {machine}'s cursor")]
    Misfire { act: String, machine: usize },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

impl FaultSpec {
    /// The perturbation this fault applies to its action instance.
    pub fn perturbation(&self) -> Perturbation {
        match self.fault_type {
            FaultType::WrongResult => Perturbation::WrongResult {
                psi: self.psi.clone(),
            },
            FaultType::FailSilent => Perturbation::FailSilent,
            FaultType::MessageLoss => Perturbation::MessageLoss {
                skip: self.k.unwrap_or(0),
            },
            FaultType::Corruption => Perturbation::Corruption {
                target: self.k.unwrap_or(0),
                psi: self.psi.clone(),
            },
            FaultType::Masquerade => Perturbation::Masquerade {
                target: self.k_prime.unwrap_or(0),
                claimed: self.k.unwrap_or(0),
            },
        }
    }

    pub fn validate(&self, system: &GCASystem) -> Result<(), FaultError> {
        let n = system.n();
        if self.machine >= n {
            return Err(FaultError::MachineOutOfRange {
                act: self.act.clone(),
                machine: self.machine,
                n,
            });
        }
        if self.position >= system.k() {
            return Err(FaultError::PositionOutOfRange {
                act: self.act.clone(),
                position: self.position,
                k: system.k(),
            });
        }
        let kind = system.actions[self.machine][self.position].kind();
        if !self.perturbation().compatible_with(kind) {
            return Err(FaultError::IncompatibleAction {
                act: self.act.clone(),
                fault_type: self.fault_type,
                machine: self.machine,
                position: self.position,
                found: kind,
            });
        }
        match self.fault_type {
            FaultType::MessageLoss | FaultType::Corruption => {
                let k = self.k.ok_or(FaultError::MissingParameter {
                    act: self.act.clone(),
                    param: "k",
                })?;
                if k >= n {
                    return Err(FaultError::MachineOutOfRange {
                        act: self.act.clone(),
                        machine: k,
                        n,
                    });
                }
                if k == self.machine {
                    return Err(FaultError::SelfParameter {
                        act: self.act.clone(),
                        param: "k",
                    });
                }
            }
            FaultType::Masquerade => {
                let kp = self.k_prime.ok_or(FaultError::MissingParameter {
                    act: self.act.clone(),
                    param: "k_prime",
                })?;
                let claimed = self.k.ok_or(FaultError::MissingParameter {
                    act: self.act.clone(),
                    param: "k",
                })?;
                if kp >= n || claimed >= n {
                    return Err(FaultError::MachineOutOfRange {
                        act: self.act.clone(),
                        machine: kp.max(claimed),
                        n,
                    });
                }
                if kp == self.machine {
                    return Err(FaultError::SelfParameter {
                        act: self.act.clone(),
                        param: "k_prime",
                    });
                }
            }
            FaultType::WrongResult | FaultType::FailSilent => {}
        }
        Ok(())
    }
}

/// Applies one fault to its action instance in place of the normal effect.
/// The targeted machine's cursor must be at the attached position.
pub fn apply_fault(
    system: &GCASystem,
    config: &SystemConfig,
    fault: &FaultSpec,
) -> Result<SystemConfig, FaultError> {
    if config.machines[fault.machine].next != Some(fault.position) {
        return Err(FaultError::Misfire {
            act: fault.act.clone(),
            machine: fault.machine,
        });
    }
    Ok(system.exec_action_perturbed(config, fault.machine, Some(&fault.perturbation()))?)
}

/// One control location of the fault automaton and the activation flags true
/// there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    pub activates: BTreeSet<String>,
}

/// Tick-level fault automaton: one location per period, flags per location,
/// an explicit switch relation, and the fault set the flags control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultAutomaton {
    pub locations: Vec<Location>,
    pub edges: BTreeSet<(usize, usize)>,
    pub initial: Vec<usize>,
    pub faults: Vec<FaultSpec>,
    /// Least time between failures, in the same time units as the period.
    pub ltbf: Option<f64>,
}

impl FaultAutomaton {
    /// The automaton of a fault-free system: one flagless self-looping
    /// location.
    pub fn fault_free() -> FaultAutomaton {
        FaultAutomaton {
            locations: vec![Location {
                name: "nominal".to_string(),
                activates: BTreeSet::new(),
            }],
            edges: BTreeSet::from([(0, 0)]),
            initial: vec![0],
            faults: Vec::new(),
            ltbf: None,
        }
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.name == name)
    }

    /// Indices of the faults whose activation flag is true at a location.
    pub fn active_faults(&self, location: usize) -> Vec<usize> {
        let flags = &self.locations[location].activates;
        self.faults
            .iter()
            .enumerate()
            .filter(|(_, f)| flags.contains(&f.act))
            .map(|(i, _)| i)
            .collect()
    }

    /// Is any fault active at the location?
    pub fn is_faulty(&self, location: usize) -> bool {
        !self.active_faults(location).is_empty()
    }

    pub fn validate(&self, system: &GCASystem) -> Result<(), FaultError> {
        if self.initial.is_empty() {
            return Err(FaultError::NoInitialLocation);
        }
        for &loc in &self.initial {
            if loc >= self.locations.len() {
                return Err(FaultError::UnknownLocation(loc));
            }
        }
        for &(from, to) in &self.edges {
            if from >= self.locations.len() {
                return Err(FaultError::DanglingEdge(from));
            }
            if to >= self.locations.len() {
                return Err(FaultError::DanglingEdge(to));
            }
        }
        for fault in &self.faults {
            fault.validate(system)?;
        }
        let budget = self.ltbf.map(|eta| ltbf_budget(eta, system.period));
        for (idx, location) in self.locations.iter().enumerate() {
            let active = self.active_faults(idx);
            let mut instances = BTreeSet::new();
            for &f in &active {
                let fault = &self.faults[f];
                if !instances.insert((fault.machine, fault.position)) {
                    return Err(FaultError::ConflictingFaults(location.name.clone()));
                }
            }
            if let Some(budget) = &budget {
                if active.len() as u64 > budget.per_period_cap {
                    return Err(FaultError::OverBudget {
                        name: location.name.clone(),
                        fired: active.len(),
                        cap: budget.per_period_cap,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Successor locations of one automaton step (one step per global period).
pub fn step_fault_automaton(automaton: &FaultAutomaton, location: usize) -> Vec<usize> {
    automaton
        .edges
        .iter()
        .filter(|(from, _)| *from == location)
        .map(|(_, to)| *to)
        .collect()
}

/// The LTBF over-approximation: at most `ceil(T/eta)` fault occurrences per
/// period, and when `eta > 3T` two faulty periods must be separated by at
/// least `floor(eta/T) - 1` complete fault-free periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LtbfBudget {
    pub per_period_cap: u64,
    pub clean_period_spacing: Option<u64>,
}

pub fn ltbf_budget(eta: f64, period: f64) -> LtbfBudget {
    assert!(
        eta > 0.0 && period > 0.0,
        "LTBF and period must be positive"
    );
    let per_period_cap = (period / eta).ceil() as u64;
    let clean_period_spacing = if eta > 3.0 * period {
        Some((eta / period).floor() as u64 - 1)
    } else {
        None
    };
    LtbfBudget {
        per_period_cap,
        clean_period_spacing,
    }
}

/// Composes the automaton with the LTBF spacing gate: the product counts
/// consecutive fault-free periods (saturating) and admits a faulty location
/// only after the required spacing. Without a spacing rule the automaton is
/// returned unchanged.
pub fn with_ltbf_gate(automaton: &FaultAutomaton, eta: f64, period: f64) -> FaultAutomaton {
    let budget = ltbf_budget(eta, period);
    let Some(need) = budget.clean_period_spacing else {
        let mut out = automaton.clone();
        out.ltbf = Some(eta);
        return out;
    };
    let need = need as usize;
    let states = need + 1;
    let index = |loc: usize, c: usize| loc * states + c;
    let mut locations = Vec::with_capacity(automaton.locations.len() * states);
    for loc in &automaton.locations {
        for c in 0..states {
            locations.push(Location {
                name: format!("{}#{}", loc.name, c),
                activates: loc.activates.clone(),
            });
        }
    }
    let mut edges = BTreeSet::new();
    for &(from, to) in &automaton.edges {
        let from_faulty = automaton.is_faulty(from);
        let to_faulty = automaton.is_faulty(to);
        for c in 0..states {
            // counter after completing a period at `from`
            let after = if from_faulty { 0 } else { (c + 1).min(need) };
            if to_faulty && after < need {
                continue;
            }
            edges.insert((index(from, c), index(to, after)));
        }
    }
    // the first fault is unconstrained: start with a full clean history
    let initial = automaton.initial.iter().map(|&l| index(l, need)).collect();
    FaultAutomaton {
        locations,
        edges,
        initial,
        faults: automaton.faults.clone(),
        ltbf: Some(eta),
    }
}

/// A resolved fault run: the automaton location per period.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FaultRun {
    pub locations: Vec<usize>,
}

impl FaultRun {
    pub fn periods(&self) -> usize {
        self.locations.len()
    }

    /// All runs of the automaton with the given number of periods.
    pub fn enumerate(automaton: &FaultAutomaton, periods: usize) -> Vec<FaultRun> {
        let mut runs = Vec::new();
        let mut stack: Vec<Vec<usize>> = automaton.initial.iter().map(|&l| vec![l]).collect();
        stack.reverse();
        while let Some(prefix) = stack.pop() {
            if prefix.len() == periods {
                runs.push(FaultRun { locations: prefix });
                continue;
            }
            let last = *prefix.last().expect("nonempty prefix");
            let mut succ = step_fault_automaton(automaton, last);
            succ.reverse();
            for next in succ {
                let mut ext = prefix.clone();
                ext.push(next);
                stack.push(ext);
            }
        }
        runs
    }

    /// The run of a fault-free system.
    pub fn fault_free(periods: usize) -> FaultRun {
        FaultRun {
            locations: vec![0; periods],
        }
    }
}

/// One element of an actuating fault sequence: the set of simultaneously
/// influenced action instances `(machine, position)` and the time it happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaEvent {
    pub actions: BTreeSet<(usize, usize)>,
    pub at: f64,
}

/// Derives the actuating fault sequence of a run at tick granularity:
/// within a period, faults actuate in sequence-position order, faults on the
/// same position actuate together.
pub fn actuating_sequence(
    system: &GCASystem,
    automaton: &FaultAutomaton,
    run: &FaultRun,
) -> Vec<ZetaEvent> {
    let period = system.period;
    let slot = period / (system.k() as f64 + 1.0);
    let mut zeta = Vec::new();
    for (m, &location) in run.locations.iter().enumerate() {
        let mut by_position: BTreeMap<usize, BTreeSet<(usize, usize)>> = BTreeMap::new();
        for idx in automaton.active_faults(location) {
            let fault = &automaton.faults[idx];
            by_position
                .entry(fault.position)
                .or_default()
                .insert((fault.machine, fault.position));
        }
        for (position, actions) in by_position {
            zeta.push(ZetaEvent {
                actions,
                at: m as f64 * period + (position as f64 + 1.0) * slot,
            });
        }
    }
    zeta
}

/// Two actuating fault sequences are effect-indistinguishable iff in every
/// period interval `[mT, (m+1)T)` their untimed subsequences are identical.
pub fn effect_indistinguishable(zeta1: &[ZetaEvent], zeta2: &[ZetaEvent], period: f64) -> bool {
    let partition = |zeta: &[ZetaEvent]| {
        let mut out: BTreeMap<u64, Vec<BTreeSet<(usize, usize)>>> = BTreeMap::new();
        for event in zeta {
            let interval = (event.at / period).floor() as u64;
            out.entry(interval).or_default().push(event.actions.clone());
        }
        out.retain(|_, events| !events.is_empty());
        out
    };
    partition(zeta1) == partition(zeta2)
}
