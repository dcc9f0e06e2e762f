//! Human-readable and machine-readable rendering of verdicts,
//! counterexamples, timed-schedule reports and simulation dumps.
//!
//! Counterexample narratives group steps by period, show only the steps
//! where the property machine's projection changes plus fault and jump
//! markers, and end with the violating state.

use crate::model::LoadedModel;
use gca_core::{Admissible, ProjectedState, Rejection, StepLabel, SystemConfig, Trace, Value};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    MachineReadable,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub model: String,
    pub properties: Vec<PropertyReport>,
    pub nodes_explored: usize,
    pub graph_complete: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub formula: String,
    /// Which machine the property is local to, when it is within the
    /// preservation fragment; otherwise the reason it is outside.
    pub preservation: PreservationNote,
    pub verdict: &'static str,
    pub bounded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleReport>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", content = "detail")]
pub enum PreservationNote {
    /// Verdicts transfer to any deployment satisfying the deterministic
    /// assumption.
    WithinFragment { machine: Option<String> },
    /// Verdict applies to the synchronized model only.
    OutsideFragment { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub machine: String,
    /// Steps of the unpruned counterexample.
    pub depth: usize,
    /// Steps kept after pruning to projection changes and markers.
    pub kept_steps: usize,
    /// For temporal counterexamples: the step index the lasso loops back to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loop_to: Option<usize>,
    pub periods: Vec<PeriodReport>,
    pub violating_state: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodReport {
    pub tick: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    pub events: Vec<String>,
}

pub fn preservation_note(
    result: &Result<Admissible, Rejection>,
    model: &LoadedModel,
) -> PreservationNote {
    match result {
        Ok(adm) => PreservationNote::WithinFragment {
            machine: adm.machine.map(|m| model.system.machine_names[m].clone()),
        },
        Err(rejection) => PreservationNote::OutsideFragment {
            reason: rejection.to_string(),
        },
    }
}

fn render_value_list(
    state: &ProjectedState,
    model: &LoadedModel,
    machine: usize,
) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let names = &model.system.pattern.arrays;
    for (var, slots) in state.values.iter().enumerate() {
        for (slot, value) in slots.iter().enumerate() {
            let label = if slot == machine {
                format!("{}.{}", model.system.machine_names[machine], names[var])
            } else {
                format!(
                    "{}.{}[{}]",
                    model.system.machine_names[machine],
                    names[var],
                    slot + 1
                )
            };
            out.push((label, value.to_string()));
        }
    }
    out.push((
        format!("{}.next", model.system.machine_names[machine]),
        state.next_value().to_string(),
    ));
    out
}

fn changed_values(
    before: &ProjectedState,
    after: &ProjectedState,
    model: &LoadedModel,
    machine: usize,
) -> Vec<String> {
    let names = &model.system.pattern.arrays;
    let mut out = Vec::new();
    for (var, slots) in after.values.iter().enumerate() {
        for (slot, value) in slots.iter().enumerate() {
            if before.values[var][slot] != *value {
                let place = if slot == machine {
                    names[var].clone()
                } else {
                    format!("{}[{}]", names[var], slot + 1)
                };
                out.push(format!("{place} := {value}"));
            }
        }
    }
    out
}

/// One-line description of a step label.
pub fn describe_step(model: &LoadedModel, label: &StepLabel) -> String {
    describe_label(label, model)
}

fn describe_label(label: &StepLabel, model: &LoadedModel) -> String {
    let machine_name = |m: usize| model.system.machine_names[m].clone();
    match label {
        StepLabel::Micro {
            machine,
            position,
            fault,
        } => {
            let action = gca_core::render_action(
                &model.system.pattern,
                *machine,
                &model.system.actions[*machine][*position],
            );
            let fault_note = fault
                .map(|idx| {
                    let f = &model.automaton.faults[idx];
                    format!(" !! fault {} ({})", f.act, f.fault_type)
                })
                .unwrap_or_default();
            format!("{}: {}{}", machine_name(*machine), action, fault_note)
        }
        StepLabel::Composite {
            position,
            faults,
            winners,
        } => {
            let template = model
                .system
                .pattern
                .render_template(&model.system.pattern.actions[*position]);
            let mut notes = String::new();
            for (machine, idx) in faults {
                let f = &model.automaton.faults[*idx];
                notes.push_str(&format!(
                    " !! fault {} ({}) on {}",
                    f.act,
                    f.fault_type,
                    machine_name(*machine)
                ));
            }
            for w in winners {
                notes.push_str(&format!(
                    " [delivery: {} keeps {}'s message for {}[{}]]",
                    machine_name(w.queue),
                    machine_name(w.sender),
                    model.system.pattern.arrays[w.var.0],
                    w.slot + 1
                ));
            }
            format!("step {}: all machines {}{}", position + 1, template, notes)
        }
        StepLabel::Jump { choice, location } => {
            let mut text = "global jump".to_string();
            if !choice.0.is_empty() && choice.0.iter().any(|&c| c != 0) {
                text.push_str(&format!(" (env choice {choice})"));
            }
            if let Some(loc) = location {
                text.push_str(&format!(
                    " -> location {}",
                    model.automaton.locations[*loc].name
                ));
            }
            text
        }
    }
}

/// Builds the period-grouped narrative of a (pruned) counterexample.
pub fn counterexample_report(
    model: &LoadedModel,
    full_depth: usize,
    pruned: &Trace,
    machine: usize,
    loop_to: Option<usize>,
    initial_location: usize,
) -> CounterexampleReport {
    let mut periods: Vec<PeriodReport> = Vec::new();
    let mut current = PeriodReport {
        tick: pruned.snapshots[0].tick,
        location: Some(model.automaton.locations[initial_location].name.clone()),
        events: Vec::new(),
    };
    for (i, label) in pruned.labels.iter().enumerate() {
        let before = ProjectedState::of(&pruned.snapshots[i], machine);
        let after = ProjectedState::of(&pruned.snapshots[i + 1], machine);
        let mut line = describe_label(label, model);
        let changes = changed_values(&before, &after, model, machine);
        if !changes.is_empty() {
            line.push_str(&format!("  |  {}", changes.join(", ")));
        }
        current.events.push(line);
        if label.is_jump() {
            let location = match label {
                StepLabel::Jump { location, .. } => *location,
                _ => None,
            };
            periods.push(current);
            current = PeriodReport {
                tick: pruned.snapshots[i + 1].tick,
                location: location.map(|l| model.automaton.locations[l].name.clone()),
                events: Vec::new(),
            };
        }
    }
    if !current.events.is_empty() || periods.is_empty() {
        periods.push(current);
    }
    let violating = ProjectedState::of(pruned.last(), machine);
    CounterexampleReport {
        machine: model.system.machine_names[machine].clone(),
        depth: full_depth,
        kept_steps: pruned.labels.len(),
        loop_to,
        periods,
        violating_state: render_value_list(&violating, model, machine),
    }
}

pub fn render_check_text(report: &CheckReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "model {}: {} reachable states{}\n",
        report.model,
        report.nodes_explored,
        if report.graph_complete {
            ""
        } else {
            " (exploration bounded: verdicts cover the explored part only)"
        }
    ));
    if report.properties.is_empty() {
        out.push_str("warning: the model declares no properties; nothing to check\n");
        return out;
    }
    for prop in &report.properties {
        let bound_note = if prop.bounded { " [bounded]" } else { "" };
        out.push_str(&format!(
            "property {}: {}{}\n",
            prop.name,
            prop.verdict.to_uppercase(),
            bound_note
        ));
        out.push_str(&format!("  formula: {}\n", prop.formula));
        match &prop.preservation {
            PreservationNote::WithinFragment { machine } => {
                let target = machine
                    .as_ref()
                    .map(|m| format!(" (local to {m})"))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "  preservation: verdict transfers to deterministic-assumption deployments{target}\n"
                ));
            }
            PreservationNote::OutsideFragment { reason } => {
                out.push_str(&format!(
                    "  preservation: synchronized model only ({reason})\n"
                ));
            }
        }
        if let Some(ce) = &prop.counterexample {
            out.push_str(&format!(
                "  counterexample for {} ({} steps, {} shown",
                ce.machine, ce.depth, ce.kept_steps
            ));
            if let Some(l) = ce.loop_to {
                out.push_str(&format!(", loops back to step {l}"));
            }
            out.push_str(")\n");
            for period in &ce.periods {
                let loc = period
                    .location
                    .as_ref()
                    .map(|l| format!(" [location {l}]"))
                    .unwrap_or_default();
                out.push_str(&format!("  period {}{}\n", period.tick + 1, loc));
                for event in &period.events {
                    out.push_str(&format!("    {event}\n"));
                }
            }
            out.push_str("  violating state:\n");
            for (name, value) in &ce.violating_state {
                out.push_str(&format!("    {name} = {value}\n"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DaCheckReport {
    pub model: String,
    pub synthesized: bool,
    pub satisfied: bool,
    pub tau_net: f64,
    pub violations: Vec<DaViolationLine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<ScheduleLine>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DaViolationLine {
    pub description: String,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleLine {
    pub position: usize,
    pub action: String,
    pub start: f64,
    pub end: f64,
}

pub fn render_dacheck_text(report: &DaCheckReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "model {}: timed deterministic assumption (tau_net = {})\n",
        report.model, report.tau_net
    ));
    if let Some(schedule) = &report.schedule {
        out.push_str("synthesized window schedule (identical on every machine):\n");
        for line in schedule {
            out.push_str(&format!(
                "  action {:>2} [{}]: {:.4} .. {:.4}\n",
                line.position, line.action, line.start, line.end
            ));
        }
    }
    if report.satisfied {
        out.push_str("deterministic assumption satisfied\n");
    } else {
        out.push_str(&format!("{} violation(s):\n", report.violations.len()));
        for v in &report.violations {
            out.push_str(&format!("  {}\n", v.description));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossValidateReport {
    pub model: String,
    pub periods: usize,
    pub all_interleavings: bool,
    pub properties: Vec<CrossValidateLine>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossValidateLine {
    pub name: String,
    pub fault_runs: usize,
    pub interleavings: usize,
    pub divergences: usize,
    pub complete: bool,
    pub samples: Vec<String>,
}

pub fn render_crossvalidate_text(report: &CrossValidateReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "model {}: asynchronous-vs-synchronized agreement over {} period(s){}\n",
        report.model,
        report.periods,
        if report.all_interleavings {
            " (all interleavings, deterministic assumption NOT enforced)"
        } else {
            ""
        }
    ));
    for line in &report.properties {
        out.push_str(&format!(
            "property {}: {} interleavings across {} fault run(s), {} divergence(s){}\n",
            line.name,
            line.interleavings,
            line.fault_runs,
            line.divergences,
            if line.complete {
                ""
            } else {
                " [enumeration capped: partial result]"
            }
        ));
        for sample in &line.samples {
            out.push_str(&format!("  {sample}\n"));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub model: String,
    pub mode: &'static str,
    pub seed: u64,
    pub periods: usize,
    pub steps: Vec<String>,
    pub final_state: Vec<MachineDump>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MachineDump {
    pub machine: String,
    pub values: Vec<(String, String)>,
    pub queue: Vec<String>,
}

pub fn machine_dump(model: &LoadedModel, config: &SystemConfig, machine: usize) -> MachineDump {
    let names = &model.system.pattern.arrays;
    let state = &config.machines[machine];
    let mut values = Vec::new();
    for (var, slots) in state.values.iter().enumerate() {
        let rendered: Vec<String> = slots.iter().map(Value::to_string).collect();
        values.push((names[var].clone(), format!("[{}]", rendered.join(","))));
    }
    for (env, value) in state.env.iter().enumerate() {
        values.push((
            format!("env.{}", model.system.pattern.env_vars[env]),
            value.to_string(),
        ));
    }
    values.push(("next".to_string(), state.next_value().to_string()));
    let queue = state
        .queue
        .iter()
        .map(|m| format!("({}[{}], {})", names[m.var.0], m.slot + 1, m.payload))
        .collect();
    MachineDump {
        machine: model.system.machine_names[machine].clone(),
        values,
        queue,
    }
}

pub fn render_simulate_text(report: &SimulateReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "model {}: {} run, seed {}, {} period(s)\n",
        report.model, report.mode, report.seed, report.periods
    ));
    for line in &report.steps {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("final state:\n");
    for m in &report.final_state {
        out.push_str(&format!("  {}:\n", m.machine));
        for (name, value) in &m.values {
            out.push_str(&format!("    {name} = {value}\n"));
        }
        if !m.queue.is_empty() {
            out.push_str(&format!("    queue = {}\n", m.queue.join(" ")));
        }
    }
    out
}

/// Serializes any report as deterministic JSON.
pub fn to_json<T: Serialize>(report: &T) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize")
}
