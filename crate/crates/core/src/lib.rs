//! Modeling and verification of globally-cycle-accurate (GCA) redundant
//! fault-tolerant systems: formal small-step semantics, fault injection, a
//! synchronized verification model with an explicit-state checker, and the
//! trace algebra that justifies checking local temporal properties on the
//! synchronized model.
//!
//! A GCA system replicates one machine pattern `n` times. Within a period
//! the machines run their action sequences asynchronously and exchange
//! array slots through message queues; a global periodic jump resynchronizes
//! them. Under the deterministic assumption (every receive ordered strictly
//! between its predecessor and successor sends across all machines), local
//! next-free temporal properties hold on a deployment iff they hold on the
//! lockstep model, which is what the checker explores — including under
//! injected faults driven by a tick-level fault automaton.

pub mod checker;
pub mod exec;
pub mod fault;
pub mod formula;
pub mod mechanisms;
pub mod pattern;
pub mod semantics;
mod text;
pub mod timing;
pub mod trace;
pub mod value;

pub use checker::{
    build_product, check_invariant, check_ltl, cross_validate_preservation, eval_propositional,
    replay, CheckError, CrossValidationOptions, CrossValidationReport, Divergence, InvariantResult,
    LassoOptions, LassoTrace, LtlResult, Node, StateGraph,
};
pub use exec::{
    da_compliant, enumerate_da_traces, enumerate_traces, extract_script, interleavings_of,
    run_sync, run_sync_scripted, sample_da_trace, sample_env_choices, sample_fault_run,
    sample_sync_trace, ChoiceScript, DaEnumeration, ExecError, FaultContext, Interleaving,
    InterleavingFilter,
};
pub use fault::{
    actuating_sequence, apply_fault, effect_indistinguishable, ltbf_budget, step_fault_automaton,
    with_ltbf_gate, FaultAutomaton, FaultError, FaultRun, FaultSpec, FaultType, Location,
    LtbfBudget, ZetaEvent,
};
pub use formula::{
    check_admissible, eval_atom, eval_formula, parse_formula, Admissible, Atom, AtomExpr,
    AtomState, AtomVar, AtomVarKind, CompareOp, Formula, FormulaError, ProjectedView, Rejection,
};
pub use mechanisms::{
    eval_interval, median_unify, propagate_fault_abstraction, redundancy_trigger, test_liveness,
    test_port_absolute_round1, test_port_absolute_round2, FaultStatusVector, IntervalResult,
    MechanismError, TaskImplicationGraph, TriggerState, TriggerTable,
};
pub use pattern::{
    instantiate, render_action, Action, ActionKind, ActionTemplate, Builtin, CExpr, EnvId, Pattern,
    PatternError, TExpr, VarId,
};
pub use semantics::{
    EnvChoice, GCASystem, MachineState, Message, Perturbation, Psi, PsiExpr, SemanticsError,
    SystemConfig,
};
pub use timing::{
    check_da_timed, synthesize_window_schedule, DaViolation, DaViolationKind, ScheduleError,
    ScheduleSlot, SynthesisError, TimedSchedule,
};
pub use trace::{
    classify_valid_receives, destutter, project, prune_counterexample, receive_positions,
    stutter_equiv, CollisionWinner, ProjectedState, ProjectedTrace, StepLabel, Trace,
};
pub use value::{parse_value, Value, ValueDomain};
