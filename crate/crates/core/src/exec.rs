//! Execution schedules: the synchronized lockstep run used as the
//! verification model, enumeration of the asynchronous interleavings
//! admitted by the deterministic assumption, and random sampling of both.
//!
//! The deterministic assumption is encoded over interleaving positions:
//! every receive of an array happens after all earlier sends of that array
//! on all machines, and before all later ones. Real time enters only through
//! the timed schedule checker.

use crate::fault::{FaultAutomaton, FaultRun};
use crate::pattern::{ActionKind, VarId};
use crate::semantics::{EnvChoice, GCASystem, SemanticsError, SystemConfig};
use crate::trace::{CollisionWinner, StepLabel, Trace};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// One period's asynchronous schedule: the order machines take their steps.
/// Machine `m` executes its positions `1..k` in program order, so the
/// machine sequence determines everything.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interleaving(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("fault run covers {got} periods, need {need}")]
    FaultRunTooShort { got: usize, need: usize },
    #[error("script has no winner for period {period} position {position} queue {queue}")]
    ScriptMismatch {
        period: usize,
        position: usize,
        queue: usize,
    },
    #[error("script env choice missing for period {0}")]
    ScriptEnvMissing(usize),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Fault(#[from] crate::fault::FaultError),
}

/// A fault automaton together with one resolved run of it.
#[derive(Debug, Clone, Copy)]
pub struct FaultContext<'a> {
    pub automaton: &'a FaultAutomaton,
    pub run: &'a FaultRun,
}

impl<'a> FaultContext<'a> {
    /// Active fault per action instance in the given period.
    fn active(&self, period: usize) -> BTreeMap<(usize, usize), usize> {
        let mut map = BTreeMap::new();
        if let Some(&location) = self.run.locations.get(period) {
            for idx in self.automaton.active_faults(location) {
                let fault = &self.automaton.faults[idx];
                map.insert((fault.machine, fault.position), idx);
            }
        }
        map
    }

    fn location_after(&self, period: usize) -> Option<usize> {
        self.run.locations.get(period + 1).copied()
    }

    fn check_span(&self, periods: usize) -> Result<(), ExecError> {
        if self.run.periods() < periods {
            return Err(ExecError::FaultRunTooShort {
                got: self.run.periods(),
                need: periods,
            });
        }
        Ok(())
    }
}

/// Fixed resolution of all nondeterminism of one run, used to build the
/// synchronized twin of an asynchronous trace.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChoiceScript {
    /// Environment choice per period.
    pub env: Vec<EnvChoice>,
    /// Delivery-order resolution per consuming receive:
    /// `(period, position, queue, var, slot) -> physical sender` whose last
    /// pending message wins.
    pub winners: BTreeMap<(usize, usize, usize, VarId, usize), usize>,
}

/// For each sequence position, the latest earlier position all machines must
/// have passed before it may run (the untimed deterministic assumption).
fn da_requirements(system: &GCASystem) -> Vec<Option<usize>> {
    let templates = &system.pattern.actions;
    templates
        .iter()
        .enumerate()
        .map(|(p, action)| {
            let var = action.var();
            let wanted = match action.kind() {
                ActionKind::Receive => ActionKind::Send,
                ActionKind::Send => ActionKind::Receive,
                ActionKind::Assign => return None,
            };
            templates[..p]
                .iter()
                .rposition(|earlier| earlier.kind() == wanted && earlier.var() == var)
        })
        .collect()
}

fn all_past(config: &SystemConfig, position: usize) -> bool {
    config
        .machines
        .iter()
        .all(|m| m.next.is_none_or(|next| next > position))
}

/// May `machine` take its next step now without violating the deterministic
/// assumption?
fn enabled(requirements: &[Option<usize>], config: &SystemConfig, machine: usize) -> bool {
    match config.machines[machine].next {
        None => false,
        Some(position) => match requirements[position] {
            None => true,
            Some(dep) => all_past(config, dep),
        },
    }
}

/// Direct re-check of the deterministic assumption on a complete period
/// interleaving: for every machine's receive of an array, every earlier send
/// of that array on every machine comes before it, and every later send
/// comes after (missing sends are vacuous). This is the definitional
/// predicate, independent of the constructive enumeration.
pub fn da_compliant(system: &GCASystem, interleaving: &Interleaving) -> bool {
    let n = system.n();
    let k = system.k();
    if interleaving.0.len() != n * k {
        return false;
    }
    let mut counts = vec![0usize; n];
    // event index of (machine, position)
    let mut when = vec![vec![usize::MAX; k]; n];
    for (t, &machine) in interleaving.0.iter().enumerate() {
        if machine >= n || counts[machine] >= k {
            return false;
        }
        when[machine][counts[machine]] = t;
        counts[machine] += 1;
    }
    if counts.iter().any(|&c| c != k) {
        return false;
    }
    let templates = &system.pattern.actions;
    for receiver in 0..n {
        for (beta, action) in templates.iter().enumerate() {
            if action.kind() != ActionKind::Receive {
                continue;
            }
            let var = action.var();
            let t_recv = when[receiver][beta];
            for (pos, other) in templates.iter().enumerate() {
                if other.kind() != ActionKind::Send || other.var() != var {
                    continue;
                }
                for row in when.iter().take(n) {
                    if pos < beta && row[pos] >= t_recv {
                        return false;
                    }
                    if pos > beta && row[pos] <= t_recv {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// The per-period interleavings of a trace, read off its micro labels.
pub fn interleavings_of(trace: &Trace) -> Vec<Interleaving> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for label in &trace.labels {
        match label {
            StepLabel::Micro { machine, .. } => current.push(*machine),
            StepLabel::Jump { .. } => {
                out.push(Interleaving(std::mem::take(&mut current)));
            }
            StepLabel::Composite { .. } => {}
        }
    }
    if !current.is_empty() {
        out.push(Interleaving(current));
    }
    out
}

/// Result of bounded enumeration; `complete` is false when the cap cut the
/// enumeration short.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaEnumeration {
    pub traces: Vec<Trace>,
    pub complete: bool,
}

/// Which interleavings an enumeration admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterleavingFilter {
    /// Only schedules satisfying the deterministic assumption.
    DaCompliant,
    /// Every schedule, including ones a deterministic deployment would never
    /// produce; used to demonstrate the nondeterminism the assumption rules
    /// out.
    All,
}

/// Enumerates every trace of `periods` periods whose per-period interleaving
/// satisfies the deterministic assumption, paired with every environment
/// choice sequence, under the given fault run. Enumeration stops at `limit`
/// traces and flags the result incomplete rather than truncating silently.
pub fn enumerate_da_traces(
    system: &GCASystem,
    periods: usize,
    limit: Option<usize>,
    faults: Option<FaultContext>,
) -> Result<DaEnumeration, ExecError> {
    enumerate_traces(
        system,
        periods,
        limit,
        faults,
        InterleavingFilter::DaCompliant,
    )
}

/// Enumeration with an explicit interleaving filter.
pub fn enumerate_traces(
    system: &GCASystem,
    periods: usize,
    limit: Option<usize>,
    faults: Option<FaultContext>,
    filter: InterleavingFilter,
) -> Result<DaEnumeration, ExecError> {
    if let Some(ctx) = &faults {
        ctx.check_span(periods)?;
    }
    let requirements = match filter {
        InterleavingFilter::DaCompliant => da_requirements(system),
        InterleavingFilter::All => vec![None; system.k()],
    };
    let cap = limit.unwrap_or(usize::MAX);
    let mut result = DaEnumeration {
        traces: Vec::new(),
        complete: true,
    };
    let mut trace = Trace::new(system.initial_config());
    enumerate_rec(
        system,
        &requirements,
        faults.as_ref(),
        0,
        periods,
        &mut trace,
        cap,
        &mut result,
    )?;
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_rec(
    system: &GCASystem,
    requirements: &[Option<usize>],
    faults: Option<&FaultContext>,
    period: usize,
    periods: usize,
    trace: &mut Trace,
    cap: usize,
    result: &mut DaEnumeration,
) -> Result<(), ExecError> {
    if result.traces.len() >= cap {
        result.complete = false;
        return Ok(());
    }
    if period == periods {
        result.traces.push(trace.clone());
        return Ok(());
    }
    let config = trace.last().clone();
    if config.machines.iter().all(|m| m.next.is_none()) {
        // period finished: jump with every environment choice
        let active_next = faults.map(|f| f.location_after(period));
        for (choice, next) in system.global_jump(&config)? {
            trace.push(
                StepLabel::Jump {
                    choice,
                    location: active_next.flatten(),
                },
                next,
            );
            enumerate_rec(
                system,
                requirements,
                faults,
                period + 1,
                periods,
                trace,
                cap,
                result,
            )?;
            trace.labels.pop();
            trace.snapshots.pop();
            trace.periods -= 1;
            if result.traces.len() >= cap {
                result.complete = false;
                return Ok(());
            }
        }
        return Ok(());
    }
    let active = faults.map(|f| f.active(period)).unwrap_or_default();
    for machine in 0..system.n() {
        if !enabled(requirements, &config, machine) {
            continue;
        }
        let position = config.machines[machine]
            .next
            .expect("enabled machine has a cursor");
        let fault = active.get(&(machine, position)).copied();
        let next = match fault {
            Some(idx) => {
                let spec = &faults
                    .expect("fault index implies context")
                    .automaton
                    .faults[idx];
                system.exec_action_perturbed(&config, machine, Some(&spec.perturbation()))?
            }
            None => system.exec_action(&config, machine)?,
        };
        trace.push(
            StepLabel::Micro {
                machine,
                position,
                fault,
            },
            next,
        );
        enumerate_rec(
            system,
            requirements,
            faults,
            period,
            periods,
            trace,
            cap,
            result,
        )?;
        trace.labels.pop();
        trace.snapshots.pop();
        if result.traces.len() >= cap {
            result.complete = false;
            return Ok(());
        }
    }
    Ok(())
}

/// Pending same-tag messages from several physical senders in `queue`,
/// i.e. a delivery order the synchronized model cannot fix on its own.
fn collision_tags(config: &SystemConfig, machine: usize) -> Vec<(VarId, usize, Vec<usize>)> {
    let mut by_tag: BTreeMap<(VarId, usize), Vec<usize>> = BTreeMap::new();
    for msg in &config.machines[machine].queue {
        if msg.slot == machine {
            continue; // receive skips the machine's own slot
        }
        let senders = by_tag.entry((msg.var, msg.slot)).or_default();
        if !senders.contains(&msg.sender) {
            senders.push(msg.sender);
        }
    }
    by_tag
        .into_iter()
        .filter(|(_, senders)| senders.len() > 1)
        .map(|((var, slot), mut senders)| {
            senders.sort_unstable();
            (var, slot, senders)
        })
        .collect()
}

/// Applies machine `machine`'s receive of `var` with an explicit winner per
/// contested tag; uncontested tags take the last pending message.
fn apply_receive_with_winners(
    config: &mut SystemConfig,
    machine: usize,
    var: VarId,
    k: usize,
    winners: &BTreeMap<(VarId, usize), usize>,
) {
    let n = config.machines.len();
    let state = &mut config.machines[machine];
    for sender_slot in 0..n {
        if sender_slot == machine {
            continue;
        }
        let mut last_any = None;
        let mut last_of_winner = None;
        let winner = winners.get(&(var, sender_slot)).copied();
        state.queue.retain(|msg| {
            if msg.var == var && msg.slot == sender_slot {
                last_any = Some(msg.payload.clone());
                if Some(msg.sender) == winner {
                    last_of_winner = Some(msg.payload.clone());
                }
                false
            } else {
                true
            }
        });
        let value = match winner {
            Some(_) => last_of_winner.or(last_any),
            None => last_any,
        };
        if let Some(value) = value {
            state.values[var.0][sender_slot] = value;
        }
    }
    let position = state.next.expect("receive step has a cursor");
    state.next = if position + 1 < k {
        Some(position + 1)
    } else {
        None
    };
    config.micro += 1;
}

pub(crate) enum WinnerPolicy<'a> {
    /// Branch over every resolution (the synchronized model's soundness
    /// branching for masquerade).
    Explore,
    /// Take the winners recorded in a script.
    Scripted(&'a ChoiceScript),
}

/// One synchronized composite step: all machines execute `position`
/// simultaneously. Returns the successors with their labels; branching
/// arises only on receives with contested delivery orders.
pub(crate) fn composite_step(
    system: &GCASystem,
    config: &SystemConfig,
    period: usize,
    position: usize,
    active: &BTreeMap<(usize, usize), usize>,
    fault_specs: &[crate::fault::FaultSpec],
    policy: &WinnerPolicy,
) -> Result<Vec<(StepLabel, SystemConfig)>, ExecError> {
    let n = system.n();
    let kind = system.pattern.actions[position].kind();
    let step_faults: Vec<(usize, usize)> = active
        .iter()
        .filter(|((_, p), _)| *p == position)
        .map(|((m, _), idx)| (*m, *idx))
        .collect();

    if kind != ActionKind::Receive {
        let mut next = config.clone();
        for machine in 0..n {
            let fault = step_faults
                .iter()
                .find(|(m, _)| *m == machine)
                .map(|(_, idx)| *idx);
            next = match fault {
                Some(idx) => {
                    let spec = &fault_specs[idx];
                    system.exec_action_perturbed(&next, machine, Some(&spec.perturbation()))?
                }
                None => system.exec_action(&next, machine)?,
            };
        }
        return Ok(vec![(
            StepLabel::Composite {
                position,
                faults: step_faults,
                winners: Vec::new(),
            },
            next,
        )]);
    }

    // composite receive: collect the contested tags per machine first
    let var = system.pattern.actions[position].var();
    let mut contested: Vec<(usize, VarId, usize, Vec<usize>)> = Vec::new();
    for machine in 0..n {
        // a fail-silent receive consumes nothing, so it contests nothing
        if step_faults.iter().any(|(m, _)| *m == machine) {
            continue;
        }
        for (tag_var, slot, senders) in collision_tags(config, machine) {
            if tag_var == var {
                contested.push((machine, tag_var, slot, senders));
            }
        }
    }

    let resolutions: Vec<Vec<CollisionWinner>> = match policy {
        WinnerPolicy::Scripted(script) => {
            let mut chosen = Vec::new();
            for (machine, tag_var, slot, _) in &contested {
                let key = (period, position, *machine, *tag_var, *slot);
                let sender =
                    script
                        .winners
                        .get(&key)
                        .copied()
                        .ok_or(ExecError::ScriptMismatch {
                            period,
                            position,
                            queue: *machine,
                        })?;
                chosen.push(CollisionWinner {
                    queue: *machine,
                    var: *tag_var,
                    slot: *slot,
                    sender,
                });
            }
            vec![chosen]
        }
        WinnerPolicy::Explore => {
            let mut combos: Vec<Vec<CollisionWinner>> = vec![Vec::new()];
            for (machine, tag_var, slot, senders) in &contested {
                let mut extended = Vec::with_capacity(combos.len() * senders.len());
                for combo in &combos {
                    for &sender in senders {
                        let mut next = combo.clone();
                        next.push(CollisionWinner {
                            queue: *machine,
                            var: *tag_var,
                            slot: *slot,
                            sender,
                        });
                        extended.push(next);
                    }
                }
                combos = extended;
            }
            combos
        }
    };

    let mut successors = Vec::with_capacity(resolutions.len());
    for winners in resolutions {
        let mut next = config.clone();
        for machine in 0..n {
            let fault = step_faults
                .iter()
                .find(|(m, _)| *m == machine)
                .map(|(_, idx)| *idx);
            if let Some(idx) = fault {
                let spec = &fault_specs[idx];
                next = system.exec_action_perturbed(&next, machine, Some(&spec.perturbation()))?;
            } else {
                let map: BTreeMap<(VarId, usize), usize> = winners
                    .iter()
                    .filter(|w| w.queue == machine)
                    .map(|w| ((w.var, w.slot), w.sender))
                    .collect();
                apply_receive_with_winners(&mut next, machine, var, system.k(), &map);
            }
        }
        successors.push((
            StepLabel::Composite {
                position,
                faults: step_faults.clone(),
                winners,
            },
            next,
        ));
    }
    Ok(successors)
}

/// Runs the synchronized lockstep model: in each period every machine
/// executes position 1 simultaneously, then position 2, and so on, followed
/// by the global jump. The result is a set because the environment update
/// and contested masquerade delivery orders branch.
pub fn run_sync(
    system: &GCASystem,
    periods: usize,
    faults: Option<FaultContext>,
) -> Result<Vec<Trace>, ExecError> {
    if let Some(ctx) = &faults {
        ctx.check_span(periods)?;
    }
    let mut done = Vec::new();
    let mut frontier = vec![Trace::new(system.initial_config())];
    for period in 0..periods {
        let active = faults.map(|f| f.active(period)).unwrap_or_default();
        for position in 0..system.k() {
            let mut next_frontier = Vec::new();
            for trace in frontier {
                let outcomes = composite_step(
                    system,
                    trace.last(),
                    period,
                    position,
                    &active,
                    faults.map(|f| f.automaton.faults.as_slice()).unwrap_or(&[]),
                    &WinnerPolicy::Explore,
                )?;
                for (label, config) in outcomes {
                    let mut branch = trace.clone();
                    branch.push(label, config);
                    next_frontier.push(branch);
                }
            }
            frontier = next_frontier;
        }
        let mut next_frontier = Vec::new();
        for trace in frontier {
            let location = faults.as_ref().and_then(|f| f.location_after(period));
            for (choice, config) in system.global_jump(trace.last())? {
                let mut branch = trace.clone();
                branch.push(StepLabel::Jump { choice, location }, config);
                next_frontier.push(branch);
            }
        }
        frontier = next_frontier;
        if period + 1 == periods {
            done = frontier.clone();
        }
    }
    if periods == 0 {
        done = frontier;
    }
    Ok(done)
}

/// Runs the synchronized model with all nondeterminism resolved by a script,
/// yielding the unique twin of the asynchronous run the script came from.
pub fn run_sync_scripted(
    system: &GCASystem,
    periods: usize,
    faults: Option<FaultContext>,
    script: &ChoiceScript,
) -> Result<Trace, ExecError> {
    if let Some(ctx) = &faults {
        ctx.check_span(periods)?;
    }
    let mut trace = Trace::new(system.initial_config());
    for period in 0..periods {
        let active = faults.map(|f| f.active(period)).unwrap_or_default();
        for position in 0..system.k() {
            let outcomes = composite_step(
                system,
                trace.last(),
                period,
                position,
                &active,
                faults.map(|f| f.automaton.faults.as_slice()).unwrap_or(&[]),
                &WinnerPolicy::Scripted(script),
            )?;
            let (label, config) = outcomes
                .into_iter()
                .next()
                .expect("scripted step yields one successor");
            trace.push(label, config);
        }
        let wanted = script
            .env
            .get(period)
            .ok_or(ExecError::ScriptEnvMissing(period))?;
        let location = faults.as_ref().and_then(|f| f.location_after(period));
        let mut successors = system.global_jump(trace.last())?;
        let idx = successors
            .iter()
            .position(|(choice, _)| choice == wanted)
            .ok_or(ExecError::ScriptEnvMissing(period))?;
        let (choice, config) = successors.swap_remove(idx);
        trace.push(StepLabel::Jump { choice, location }, config);
    }
    Ok(trace)
}

/// Extracts the choice script of a trace: its environment choices and, for
/// every receive that consumed a contested tag, the physical sender whose
/// message was last in the queue.
pub fn extract_script(system: &GCASystem, trace: &Trace) -> ChoiceScript {
    let mut script = ChoiceScript::default();
    let mut period = 0usize;
    for (i, label) in trace.labels.iter().enumerate() {
        match label {
            StepLabel::Jump { choice, .. } => {
                script.env.push(choice.clone());
                period += 1;
            }
            StepLabel::Micro {
                machine, position, ..
            } => {
                if system.pattern.actions[*position].kind() != ActionKind::Receive {
                    continue;
                }
                let before = &trace.snapshots[i];
                for (var, slot, _) in collision_tags(before, *machine) {
                    let last_sender = before.machines[*machine]
                        .queue
                        .iter()
                        .rev()
                        .find(|m| m.var == var && m.slot == slot)
                        .map(|m| m.sender)
                        .expect("contested tag has messages");
                    script
                        .winners
                        .insert((period, *position, *machine, var, slot), last_sender);
                }
            }
            StepLabel::Composite {
                position, winners, ..
            } => {
                for w in winners {
                    script
                        .winners
                        .insert((period, *position, w.queue, w.var, w.slot), w.sender);
                }
            }
        }
    }
    script
}

/// Pre-draws one environment choice per period. The alternative counts are
/// static, so the same choices can drive an asynchronous run and its
/// synchronized counterpart.
pub fn sample_env_choices(
    system: &GCASystem,
    periods: usize,
    rng: &mut impl Rng,
) -> Vec<EnvChoice> {
    let n = system.n();
    let env_count = system.pattern.env_vars.len();
    (0..periods)
        .map(|_| {
            let mut choice = Vec::with_capacity(n * env_count);
            for machine in 0..n {
                for env in 0..env_count {
                    let width = system.env_update[machine][env].len().max(1);
                    choice.push(rng.gen_range(0..width));
                }
            }
            EnvChoice(choice)
        })
        .collect()
}

/// Samples a random run of the fault automaton.
pub fn sample_fault_run(
    automaton: &crate::fault::FaultAutomaton,
    periods: usize,
    rng: &mut impl Rng,
) -> FaultRun {
    let mut locations = Vec::with_capacity(periods);
    if periods == 0 {
        return FaultRun { locations };
    }
    let mut at = automaton.initial[rng.gen_range(0..automaton.initial.len())];
    locations.push(at);
    for _ in 1..periods {
        let successors = crate::fault::step_fault_automaton(automaton, at);
        if successors.is_empty() {
            break;
        }
        at = successors[rng.gen_range(0..successors.len())];
        locations.push(at);
    }
    FaultRun { locations }
}

fn jump_with_choice(
    system: &GCASystem,
    trace: &mut Trace,
    location: Option<usize>,
    env: Option<&EnvChoice>,
    rng: &mut impl Rng,
) -> Result<(), ExecError> {
    let mut successors = system.global_jump(trace.last())?;
    let idx = match env {
        Some(wanted) => successors
            .iter()
            .position(|(c, _)| c == wanted)
            .ok_or(ExecError::ScriptEnvMissing(trace.periods))?,
        None => rng.gen_range(0..successors.len()),
    };
    let (choice, config) = successors.swap_remove(idx);
    trace.push(StepLabel::Jump { choice, location }, config);
    Ok(())
}

/// Samples one DA-compliant asynchronous run. Scheduling is resolved
/// uniformly at each step; environment choices come from `env` when given
/// (one per period) and are drawn from the generator otherwise.
pub fn sample_da_trace(
    system: &GCASystem,
    periods: usize,
    faults: Option<FaultContext>,
    env: Option<&[EnvChoice]>,
    rng: &mut impl Rng,
) -> Result<Trace, ExecError> {
    if let Some(ctx) = &faults {
        ctx.check_span(periods)?;
    }
    let requirements = da_requirements(system);
    let mut trace = Trace::new(system.initial_config());
    for period in 0..periods {
        let active = faults.map(|f| f.active(period)).unwrap_or_default();
        loop {
            let config = trace.last().clone();
            if config.machines.iter().all(|m| m.next.is_none()) {
                break;
            }
            let enabled_machines: Vec<usize> = (0..system.n())
                .filter(|&m| enabled(&requirements, &config, m))
                .collect();
            let machine = enabled_machines[rng.gen_range(0..enabled_machines.len())];
            let position = config.machines[machine].next.expect("enabled");
            let fault = active.get(&(machine, position)).copied();
            let next = match fault {
                Some(idx) => {
                    let spec = &faults.expect("fault context").automaton.faults[idx];
                    system.exec_action_perturbed(&config, machine, Some(&spec.perturbation()))?
                }
                None => system.exec_action(&config, machine)?,
            };
            trace.push(
                StepLabel::Micro {
                    machine,
                    position,
                    fault,
                },
                next,
            );
        }
        let location = faults.as_ref().and_then(|f| f.location_after(period));
        jump_with_choice(system, &mut trace, location, env.map(|e| &e[period]), rng)?;
    }
    Ok(trace)
}

/// Samples one synchronized run with uniformly chosen delivery-order
/// branches; environment choices come from `env` when given.
pub fn sample_sync_trace(
    system: &GCASystem,
    periods: usize,
    faults: Option<FaultContext>,
    env: Option<&[EnvChoice]>,
    rng: &mut impl Rng,
) -> Result<Trace, ExecError> {
    if let Some(ctx) = &faults {
        ctx.check_span(periods)?;
    }
    let mut trace = Trace::new(system.initial_config());
    for period in 0..periods {
        let active = faults.map(|f| f.active(period)).unwrap_or_default();
        for position in 0..system.k() {
            let mut outcomes = composite_step(
                system,
                trace.last(),
                period,
                position,
                &active,
                faults.map(|f| f.automaton.faults.as_slice()).unwrap_or(&[]),
                &WinnerPolicy::Explore,
            )?;
            let pick = rng.gen_range(0..outcomes.len());
            let (label, config) = outcomes.swap_remove(pick);
            trace.push(label, config);
        }
        let location = faults.as_ref().and_then(|f| f.location_after(period));
        jump_with_choice(system, &mut trace, location, env.map(|e| &e[period]), rng)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault::{FaultAutomaton, FaultRun};
    use crate::pattern::Pattern;
    use crate::trace::{project, stutter_equiv};
    use crate::value::{Value, ValueDomain};

    fn system_of(n: usize, actions: &[&str]) -> GCASystem {
        let mut p = Pattern::new(
            n,
            vec!["a".into(), "b".into(), "c".into()],
            vec!["e".into()],
        )
        .unwrap();
        for a in actions {
            p.push_action(a).unwrap();
        }
        let mut sys = GCASystem::new(p, 10.0).unwrap();
        sys.domains = vec![ValueDomain::bounded(-100, 100).unwrap(); 3];
        sys.env_domains = vec![ValueDomain::bounded(-100, 100).unwrap()];
        sys.initial_values = vec![Value::Int(0); 3];
        sys.initial_env = vec![Value::Int(0)];
        sys
    }

    fn fig2(n: usize) -> GCASystem {
        let mut sys = system_of(n, &["a[x] <- e + x", "send(a[x])", "receive(a)"]);
        // distinct per-machine data comes from the machine index
        sys.initial_env = vec![Value::Int(10)];
        sys
    }

    /// All interleavings of n machines with k positions each (multiset
    /// permutations), as the brute-force side of the oracle.
    fn all_interleavings(n: usize, k: usize) -> Vec<Interleaving> {
        let mut out = Vec::new();
        let mut counts = vec![0usize; n];
        let mut current = Vec::with_capacity(n * k);
        fn rec(
            n: usize,
            k: usize,
            counts: &mut Vec<usize>,
            current: &mut Vec<usize>,
            out: &mut Vec<Interleaving>,
        ) {
            if current.len() == n * k {
                out.push(Interleaving(current.clone()));
                return;
            }
            for m in 0..n {
                if counts[m] < k {
                    counts[m] += 1;
                    current.push(m);
                    rec(n, k, counts, current, out);
                    current.pop();
                    counts[m] -= 1;
                }
            }
        }
        rec(n, k, &mut counts, &mut current, &mut out);
        out
    }

    #[test]
    fn enumeration_matches_brute_force_filter() {
        // assign; send; receive; assign over two machines
        let sys = system_of(
            2,
            &["a[x] <- e", "send(a[x])", "receive(a)", "b[x] <- a[x+1]"],
        );
        let enumerated = enumerate_da_traces(&sys, 1, None, None).unwrap();
        assert!(enumerated.complete);
        let got: std::collections::BTreeSet<Interleaving> = enumerated
            .traces
            .iter()
            .map(|t| interleavings_of(t).remove(0))
            .collect();
        let brute: std::collections::BTreeSet<Interleaving> = all_interleavings(2, 4)
            .into_iter()
            .filter(|i| da_compliant(&sys, i))
            .collect();
        assert_eq!(got, brute);
        assert!(!got.is_empty());
        assert!(
            got.len() < 70,
            "the DA filter prunes the 8!/(4!4!) = 70 interleavings"
        );
        // every enumerated interleaving places both sends before both receives
        for trace in &enumerated.traces {
            let order = &interleavings_of(trace)[0].0;
            let mut counts = [0usize; 2];
            let mut send_events = Vec::new();
            let mut recv_events = Vec::new();
            for (t, &m) in order.iter().enumerate() {
                match counts[m] {
                    1 => send_events.push(t),
                    2 => recv_events.push(t),
                    _ => {}
                }
                counts[m] += 1;
            }
            let max_send = send_events.iter().max().unwrap();
            let min_recv = recv_events.iter().min().unwrap();
            assert!(max_send < min_recv);
        }
    }

    #[test]
    fn enumeration_is_closed_under_the_definitional_predicate() {
        let sys = fig2(3);
        let enumerated = enumerate_da_traces(&sys, 1, None, None).unwrap();
        for trace in &enumerated.traces {
            let interleaving = &interleavings_of(trace)[0];
            assert!(da_compliant(&sys, interleaving));
        }
    }

    #[test]
    fn pattern_without_communication_admits_all_interleavings() {
        let sys = system_of(2, &["a[x] <- e", "b[x] <- a[x]"]);
        let enumerated = enumerate_da_traces(&sys, 1, None, None).unwrap();
        assert_eq!(
            enumerated.traces.len(),
            6,
            "(2k choose k) = 6 interleavings, DA vacuous"
        );
    }

    #[test]
    fn receive_scheduled_before_matching_send_is_excluded() {
        let sys = fig2(2);
        let enumerated = enumerate_da_traces(&sys, 1, None, None).unwrap();
        // machine 0 fully first, so its receive runs before machine 1's send
        let bad = Interleaving(vec![0, 0, 0, 1, 1, 1]);
        assert!(!da_compliant(&sys, &bad));
        assert!(!enumerated
            .traces
            .iter()
            .any(|t| interleavings_of(t)[0] == bad));
    }

    #[test]
    fn cap_is_reported_not_silent() {
        let sys = fig2(3);
        let enumerated = enumerate_da_traces(&sys, 1, Some(3), None).unwrap();
        assert!(!enumerated.complete);
        assert_eq!(enumerated.traces.len(), 3);
    }

    #[test]
    fn lockstep_order_satisfies_the_deterministic_assumption() {
        let sys = fig2(3);
        let mut lockstep = Vec::new();
        for _position in 0..sys.k() {
            lockstep.extend(0..sys.n());
        }
        assert!(da_compliant(&sys, &Interleaving(lockstep)));
    }

    #[test]
    fn sync_run_shape_and_end_state_match_async_runs() {
        let sys = fig2(3);
        let sync = run_sync(&sys, 1, None).unwrap();
        assert_eq!(sync.len(), 1, "deterministic env: one sync trace");
        let sync = &sync[0];
        assert_eq!(
            sync.labels.len(),
            sys.k() + 1,
            "k composite steps and a jump"
        );
        let asyncs = enumerate_da_traces(&sys, 1, None, None).unwrap();
        assert!(asyncs.complete);
        // same end state per machine for every DA-compliant interleaving
        for trace in &asyncs.traces {
            for m in 0..3 {
                assert_eq!(
                    trace.last().machines[m].values,
                    sync.last().machines[m].values
                );
                assert_eq!(trace.last().machines[m].env, sync.last().machines[m].env);
            }
        }
    }

    #[test]
    fn single_machine_sync_equals_the_sequential_run() {
        let sys = fig2(1);
        let sync = run_sync(&sys, 2, None).unwrap();
        let asyncs = enumerate_da_traces(&sys, 2, None, None).unwrap();
        assert_eq!(sync.len(), 1);
        assert_eq!(asyncs.traces.len(), 1);
        assert_eq!(
            sync[0].last().machines[0].values,
            asyncs.traces[0].last().machines[0].values
        );
    }

    #[test]
    fn async_projections_are_stutter_equivalent_to_the_scripted_twin() {
        // two machines across two periods, three machines across one: the
        // interleaving counts stay in the hundreds
        for (n, periods) in [(2usize, 2usize), (3, 1)] {
            let sys = fig2(n);
            let asyncs = enumerate_da_traces(&sys, periods, None, None).unwrap();
            assert!(asyncs.complete);
            assert!(!asyncs.traces.is_empty());
            for trace in &asyncs.traces {
                let script = extract_script(&sys, trace);
                let twin = run_sync_scripted(&sys, periods, None, &script).unwrap();
                for machine in 0..n {
                    let a = project(trace, machine).states;
                    let s = project(&twin, machine).states;
                    assert!(
                        stutter_equiv(&a, &s),
                        "machine {machine} projection not stutter-equivalent (n={n})"
                    );
                }
            }
        }
    }

    #[test]
    fn sync_projections_never_stutter_within_a_period() {
        // every composite step advances every cursor, so a machine's
        // projected state changes at every step of a synchronized trace
        let sys = fig2(3);
        let sync = run_sync(&sys, 2, None).unwrap();
        for trace in &sync {
            for machine in 0..3 {
                let proj = project(trace, machine).states;
                assert!(proj.windows(2).all(|w| w[0] != w[1]));
            }
        }
    }

    #[test]
    fn invalid_second_receive_never_changes_state() {
        // send; receive; receive of one array: the second receive has a
        // later receive outranking the send, making it a no-op in every
        // admitted schedule
        let sys = system_of(2, &["send(a[x])", "receive(a)", "receive(a)"]);
        let enumeration = enumerate_da_traces(&sys, 1, None, None).unwrap();
        assert!(enumeration.complete);
        assert!(!enumeration.traces.is_empty());
        let valid = crate::trace::classify_valid_receives(&sys.pattern.actions);
        assert_eq!(valid, std::collections::BTreeSet::from([1]));
        for trace in &enumeration.traces {
            for (i, label) in trace.labels.iter().enumerate() {
                let StepLabel::Micro {
                    machine,
                    position: 2,
                    ..
                } = label
                else {
                    continue;
                };
                let before = &trace.snapshots[i].machines[*machine];
                let after = &trace.snapshots[i + 1].machines[*machine];
                assert_eq!(before.values, after.values, "no value changes");
                assert_eq!(before.queue, after.queue, "no queue changes");
                assert_eq!(after.next, None, "only the cursor advances");
            }
        }
    }

    #[test]
    fn fault_free_automaton_changes_nothing() {
        let sys = fig2(3);
        let automaton = FaultAutomaton::fault_free();
        let run = FaultRun::fault_free(2);
        let ctx = FaultContext {
            automaton: &automaton,
            run: &run,
        };
        let with = run_sync(&sys, 2, Some(ctx)).unwrap();
        let without = run_sync(&sys, 2, None).unwrap();
        assert_eq!(with.len(), without.len());
        for (a, b) in with.iter().zip(&without) {
            assert_eq!(a.snapshots, b.snapshots, "byte-equal configurations");
        }
    }

    #[test]
    fn sampling_respects_the_deterministic_assumption() {
        use rand::SeedableRng;
        let sys = fig2(3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let trace = sample_da_trace(&sys, 2, None, None, &mut rng).unwrap();
            for interleaving in interleavings_of(&trace) {
                assert!(da_compliant(&sys, &interleaving));
            }
        }
    }

    #[test]
    fn masquerade_collision_branches_and_scripts_resolve() {
        use crate::fault::{FaultSpec, FaultType};
        use crate::semantics::Psi;
        // machine 1 masquerades as machine 3 towards machine 2, while
        // machine 3 sends honestly: machine 2's a[3] copy is contested
        let sys = fig2(3);
        let automaton = FaultAutomaton {
            locations: vec![crate::fault::Location {
                name: "masq".to_string(),
                activates: ["forge".to_string()].into(),
            }],
            edges: [(0usize, 0usize)].into(),
            initial: vec![0],
            faults: vec![FaultSpec {
                act: "forge".to_string(),
                fault_type: FaultType::Masquerade,
                machine: 0,
                position: 1,
                k: Some(2),       // claims machine 3
                k_prime: Some(1), // delivered to machine 2
                psi: Psi::ForceErroneous,
            }],
            ltbf: None,
        };
        automaton.validate(&sys).unwrap();
        let run = FaultRun { locations: vec![0] };
        let ctx = FaultContext {
            automaton: &automaton,
            run: &run,
        };
        let sync = run_sync(&sys, 1, Some(ctx)).unwrap();
        assert_eq!(sync.len(), 2, "two delivery orders for the contested tag");
        let finals: std::collections::BTreeSet<Value> = sync
            .iter()
            .map(|t| t.last().machines[1].values[0][2].clone())
            .collect();
        assert_eq!(
            finals.len(),
            2,
            "the contested slot differs between branches"
        );

        // every async interleaving matches its scripted twin exactly
        let asyncs = enumerate_da_traces(&sys, 1, None, Some(ctx)).unwrap();
        assert!(asyncs.complete);
        let mut seen_winners = std::collections::BTreeSet::new();
        for trace in &asyncs.traces {
            let script = extract_script(&sys, trace);
            seen_winners.extend(script.winners.values().copied());
            let twin = run_sync_scripted(&sys, 1, Some(ctx), &script).unwrap();
            for machine in 0..3 {
                let a = project(trace, machine).states;
                let s = project(&twin, machine).states;
                assert!(stutter_equiv(&a, &s), "machine {machine}");
            }
        }
        assert_eq!(
            seen_winners.len(),
            2,
            "async schedules realize both delivery orders"
        );
    }
}
