//! The four workbench commands. Each returns the process exit code along
//! with the rendered report: 0 when everything holds, 1 when a violation or
//! divergence was found, 2 for usage and model errors (raised as errors by
//! the caller).

use crate::model::LoadedModel;
use crate::report::{
    counterexample_report, machine_dump, preservation_note, render_check_text,
    render_crossvalidate_text, render_dacheck_text, render_simulate_text, to_json, CheckReport,
    CrossValidateLine, CrossValidateReport, DaCheckReport, DaViolationLine, Format, PropertyReport,
    ScheduleLine, SimulateReport,
};
use gca_core::{
    build_product, check_admissible, check_da_timed, check_invariant, check_ltl,
    cross_validate_preservation, prune_counterexample, sample_da_trace, sample_env_choices,
    sample_fault_run, sample_sync_trace, synthesize_window_schedule, CrossValidationOptions,
    FaultContext, FaultRun, Formula, LassoOptions, StepLabel, Trace,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Model(#[from] crate::model::ModelError),
    #[error("{0}")]
    Check(#[from] gca_core::CheckError),
    #[error("{0}")]
    Exec(#[from] gca_core::ExecError),
    #[error("{0}")]
    Schedule(#[from] gca_core::ScheduleError),
    #[error("{0}")]
    Synthesis(#[from] gca_core::SynthesisError),
    #[error("unknown property `{0}`")]
    UnknownProperty(String),
    #[error("the model has no [schedule] section; pass --synthesize-window to create one")]
    MissingSchedule,
}

pub struct CheckOptions {
    pub property: Option<String>,
    pub cap: Option<usize>,
    pub format: Format,
}

fn selected_properties<'m>(
    model: &'m LoadedModel,
    filter: &Option<String>,
) -> Result<Vec<&'m (String, Formula)>, CommandError> {
    match filter {
        None => Ok(model.properties.iter().collect()),
        Some(name) => {
            let found: Vec<_> = model.properties.iter().filter(|(n, _)| n == name).collect();
            if found.is_empty() {
                return Err(CommandError::UnknownProperty(name.clone()));
            }
            Ok(found)
        }
    }
}

/// Model checking: every property is checked on the product of the
/// synchronized system with its fault automaton.
pub fn cmd_check(
    model: &LoadedModel,
    options: &CheckOptions,
) -> Result<(i32, String), CommandError> {
    let properties = selected_properties(model, &options.property)?;
    let graph = build_product(&model.system, &model.automaton, options.cap)?;
    let mut report = CheckReport {
        model: model.name.clone(),
        properties: Vec::new(),
        nodes_explored: graph.node_count(),
        graph_complete: graph.complete,
    };
    let mut any_violation = false;
    for (name, formula) in properties {
        let admissible = check_admissible(formula, &model.system);
        let machine = admissible
            .as_ref()
            .ok()
            .and_then(|a| a.machine)
            .unwrap_or(0);
        // invariants go through breadth-first reachability for shortest
        // counterexamples; everything else through lasso enumeration
        let (holds, bounded, counterexample) = match formula {
            Formula::Globally(inner) if inner.is_propositional() => {
                let result = check_invariant(&model.system, &graph, inner)?;
                match result.verdict {
                    None => (true, result.bounded, None),
                    Some((trace, initial_location)) => {
                        let depth = trace.labels.len();
                        let pruned = prune_counterexample(&trace, machine);
                        (
                            false,
                            result.bounded,
                            Some(counterexample_report(
                                model,
                                depth,
                                &pruned,
                                machine,
                                None,
                                initial_location,
                            )),
                        )
                    }
                }
            }
            _ => {
                let result = check_ltl(&model.system, &graph, formula, LassoOptions::default())?;
                match result.verdict {
                    None => (true, result.bounded, None),
                    Some(lasso) => {
                        let depth = lasso.trace.labels.len();
                        (
                            false,
                            result.bounded,
                            Some(counterexample_report(
                                model,
                                depth,
                                &lasso.trace,
                                machine,
                                Some(lasso.loop_to),
                                lasso.initial_location,
                            )),
                        )
                    }
                }
            }
        };
        if !holds {
            any_violation = true;
        }
        report.properties.push(PropertyReport {
            name: name.clone(),
            formula: formula.to_string(),
            preservation: preservation_note(&admissible, model),
            verdict: if holds { "holds" } else { "counterexample" },
            bounded,
            counterexample,
        });
    }
    let text = match options.format {
        Format::Text => render_check_text(&report),
        Format::MachineReadable => to_json(&report),
    };
    Ok((if any_violation { 1 } else { 0 }, text))
}

pub struct CrossValidateOptions {
    pub periods: usize,
    pub cap: usize,
    pub all_interleavings: bool,
    pub property: Option<String>,
    pub format: Format,
}

/// Replays the preservation argument: enumerates admitted interleavings per
/// fault run and compares projections and verdicts against the synchronized
/// twin.
pub fn cmd_crossvalidate(
    model: &LoadedModel,
    options: &CrossValidateOptions,
) -> Result<(i32, String), CommandError> {
    let properties = selected_properties(model, &options.property)?;
    let runs = FaultRun::enumerate(&model.automaton, options.periods);
    let mut report = CrossValidateReport {
        model: model.name.clone(),
        periods: options.periods,
        all_interleavings: options.all_interleavings,
        properties: Vec::new(),
    };
    let mut any_divergence = false;
    for (name, formula) in properties {
        let mut line = CrossValidateLine {
            name: name.clone(),
            fault_runs: runs.len(),
            interleavings: 0,
            divergences: 0,
            complete: true,
            samples: Vec::new(),
        };
        let mut budget = options.cap;
        for run in &runs {
            if budget == 0 {
                line.complete = false;
                break;
            }
            let ctx = FaultContext {
                automaton: &model.automaton,
                run,
            };
            let result = cross_validate_preservation(
                &model.system,
                formula,
                options.periods,
                CrossValidationOptions {
                    faults: Some(ctx),
                    all_interleavings: options.all_interleavings,
                    limit: Some(budget),
                },
            )?;
            budget = budget.saturating_sub(result.interleavings_checked);
            line.interleavings += result.interleavings_checked;
            line.divergences += result.divergences.len();
            line.complete &= result.complete;
            for divergence in result.divergences.iter().take(3) {
                if line.samples.len() < 3 {
                    line.samples.push(format!(
                        "machine {} diverged under schedule {:?}: stutter-equivalent {}, verdict {} vs {} synchronized",
                        model.system.machine_names[divergence.machine],
                        divergence.interleavings.first().map(|i| i.0.clone()).unwrap_or_default(),
                        divergence.stutter_equivalent,
                        divergence.async_verdict,
                        divergence.sync_verdict,
                    ));
                }
            }
        }
        if line.divergences > 0 {
            any_divergence = true;
        }
        report.properties.push(line);
    }
    let text = match options.format {
        Format::Text => render_crossvalidate_text(&report),
        Format::MachineReadable => to_json(&report),
    };
    Ok((if any_divergence { 1 } else { 0 }, text))
}

pub struct DaCheckOptions {
    pub synthesize: bool,
    pub tau_net: Option<f64>,
    pub format: Format,
}

/// Timed deterministic-assumption checking of the model's schedule, or
/// synthesis of a window schedule that passes it.
pub fn cmd_dacheck(
    model: &LoadedModel,
    options: &DaCheckOptions,
) -> Result<(i32, String), CommandError> {
    let pattern = &model.system.pattern;
    let (schedule, synthesized) = if options.synthesize {
        let tau_net = options
            .tau_net
            .or(model.schedule.as_ref().map(|s| s.tau_net))
            .unwrap_or(1.0);
        (
            synthesize_window_schedule(pattern, tau_net, model.system.period)?,
            true,
        )
    } else {
        match &model.schedule {
            Some(schedule) => (schedule.clone(), false),
            None => return Err(CommandError::MissingSchedule),
        }
    };
    let violations = check_da_timed(&schedule, pattern)?;
    let report = DaCheckReport {
        model: model.name.clone(),
        synthesized,
        satisfied: violations.is_empty(),
        tau_net: schedule.tau_net,
        violations: violations
            .iter()
            .map(|v| DaViolationLine {
                description: v.to_string(),
                slack: v.slack(),
            })
            .collect(),
        schedule: synthesized.then(|| {
            schedule.slots[0]
                .iter()
                .enumerate()
                .map(|(position, slot)| ScheduleLine {
                    position: position + 1,
                    action: pattern.render_template(&pattern.actions[position]),
                    start: slot.start,
                    end: slot.end,
                })
                .collect()
        }),
    };
    let text = match options.format {
        Format::Text => render_dacheck_text(&report),
        Format::MachineReadable => to_json(&report),
    };
    Ok((if report.satisfied { 0 } else { 1 }, text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    Async,
    Sync,
}

pub struct SimulateOptions {
    pub periods: usize,
    pub seed: u64,
    pub mode: SimulationMode,
    pub format: Format,
}

/// Samples one run with seeded resolution of every branch. The fault run
/// and environment choices are drawn before scheduling, so asynchronous and
/// synchronized runs of the same seed make the same non-scheduling choices.
pub fn simulate_trace(
    model: &LoadedModel,
    periods: usize,
    seed: u64,
    mode: SimulationMode,
) -> Result<Trace, CommandError> {
    let mut choices = ChaCha8Rng::seed_from_u64(seed);
    let run = sample_fault_run(&model.automaton, periods, &mut choices);
    let env = sample_env_choices(&model.system, periods, &mut choices);
    let mut scheduling = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let ctx = FaultContext {
        automaton: &model.automaton,
        run: &run,
    };
    Ok(match mode {
        SimulationMode::Async => sample_da_trace(
            &model.system,
            periods,
            Some(ctx),
            Some(&env),
            &mut scheduling,
        )?,
        SimulationMode::Sync => sample_sync_trace(
            &model.system,
            periods,
            Some(ctx),
            Some(&env),
            &mut scheduling,
        )?,
    })
}

/// One concrete run rendered step by step.
pub fn cmd_simulate(
    model: &LoadedModel,
    options: &SimulateOptions,
) -> Result<(i32, String), CommandError> {
    let trace = simulate_trace(model, options.periods, options.seed, options.mode)?;
    let report = SimulateReport {
        model: model.name.clone(),
        mode: match options.mode {
            SimulationMode::Async => "asynchronous",
            SimulationMode::Sync => "synchronized",
        },
        seed: options.seed,
        periods: options.periods,
        steps: dump_steps(model, &trace),
        final_state: (0..model.system.n())
            .map(|m| machine_dump(model, trace.last(), m))
            .collect(),
    };
    let text = match options.format {
        Format::Text => render_simulate_text(&report),
        Format::MachineReadable => to_json(&report),
    };
    Ok((0, text))
}

fn dump_steps(model: &LoadedModel, trace: &Trace) -> Vec<String> {
    let mut out = Vec::new();
    for (i, label) in trace.labels.iter().enumerate() {
        let before = &trace.snapshots[i];
        let line = match label {
            StepLabel::Micro { .. } | StepLabel::Composite { .. } => format!(
                "[{}.{:>2}] {}",
                before.tick + 1,
                before.micro + 1,
                crate::report::describe_step(model, label)
            ),
            StepLabel::Jump { .. } => format!(
                "[{}.--] {}",
                before.tick + 1,
                crate::report::describe_step(model, label)
            ),
        };
        out.push(line);
    }
    out
}
