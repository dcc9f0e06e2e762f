//! Small-step semantics of globally-cycle-accurate redundant systems:
//! configurations, atomic action execution, the global periodic jump, and
//! the perturbed execution used by the fault engine.
//!
//! All operations are pure config-to-config transformations; configurations
//! are immutable snapshots that are safe to share between checker workers.

use crate::mechanisms::{
    median_unify, redundancy_trigger, test_liveness, test_port_absolute_round1,
    test_port_absolute_round2, FaultStatusVector, MechanismError, TriggerState, TriggerTable,
};
use crate::pattern::{
    instantiate, Action, ActionKind, Builtin, CExpr, EnvId, Pattern, PatternError, TExpr, VarId,
};
use crate::value::{Value, ValueDomain};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// A queued message: which array slot it updates and the carried value. The
/// slot doubles as the claimed sender identity, which is what the masquerade
/// fault forges; `sender` records who physically sent it, so the
/// synchronized model can branch over the delivery orders a deployment could
/// produce when claimed identities collide.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Message {
    pub var: VarId,
    pub slot: usize,
    pub sender: usize,
    pub payload: Value,
}

/// Per-machine state: local copies of every array, the message queue, the
/// next-action cursor and the environment valuation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MachineState {
    /// `values[var][slot]`
    pub values: Vec<Vec<Value>>,
    pub queue: Vec<Message>,
    /// 0-based position of the next action; `None` once the period's
    /// sequence is finished.
    pub next: Option<usize>,
    pub env: Vec<Value>,
}

impl MachineState {
    pub fn slot(&self, var: VarId, slot: usize) -> &Value {
        &self.values[var.0][slot]
    }

    /// Cursor as an atom value: position `j` reads as `j` (1-based), the
    /// finished cursor as `0` (the sequence's virtual null action).
    pub fn next_value(&self) -> Value {
        Value::Int(self.next.map(|p| p as i64 + 1).unwrap_or(0))
    }
}

/// Global configuration: all machine states plus the period counter and the
/// micro-step position inside the current period.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SystemConfig {
    pub machines: Vec<MachineState>,
    pub tick: u64,
    pub micro: u32,
}

/// How a fault perturbs one action execution in place of its normal effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Assign writes `psi(e)` instead of `e`.
    WrongResult { psi: Psi },
    /// The action updates nothing (values and queues untouched); the machine
    /// is silent, not stuck, so the cursor still advances.
    FailSilent,
    /// Send delivers to everyone except machine `skip`.
    MessageLoss { skip: usize },
    /// Send delivers `psi(value)` to machine `target`, the true value to the
    /// rest.
    Corruption { target: usize, psi: Psi },
    /// Send delivers to machine `target` a message claiming to come from
    /// machine `claimed`.
    Masquerade { target: usize, claimed: usize },
}

impl Perturbation {
    /// The action kind this perturbation may attach to.
    pub fn compatible_kind(&self) -> ActionKind {
        match self {
            Perturbation::WrongResult { .. } => ActionKind::Assign,
            // fail-silent suppresses any action
            Perturbation::FailSilent => ActionKind::Assign,
            Perturbation::MessageLoss { .. }
            | Perturbation::Corruption { .. }
            | Perturbation::Masquerade { .. } => ActionKind::Send,
        }
    }

    pub fn compatible_with(&self, kind: ActionKind) -> bool {
        matches!(self, Perturbation::FailSilent) || self.compatible_kind() == kind
    }
}

/// Error function of a fault: maps the fault-free value of the attached
/// action to the faulty one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Psi {
    /// Fault-abstraction default: the result is erroneous.
    ForceErroneous,
    Map(PsiExpr),
}

impl Psi {
    pub fn apply(&self, value: &Value) -> Value {
        match self {
            Psi::ForceErroneous => Value::Erroneous,
            Psi::Map(expr) => expr.eval(value),
        }
    }
}

/// Arithmetic over the fault-free value (`arg`) and constants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsiExpr {
    Arg,
    Const(Value),
    Add(Box<PsiExpr>, Box<PsiExpr>),
    Mul(Box<PsiExpr>, Box<PsiExpr>),
    Div(Box<PsiExpr>, Box<PsiExpr>),
    Neg(Box<PsiExpr>),
}

impl PsiExpr {
    /// Parses an error function body: arithmetic over `arg`, integer
    /// constants, `Correct` and `Erroneous`.
    pub fn parse(text: &str) -> Result<PsiExpr, PatternError> {
        // a throwaway pattern gives us the expression parser with `arg` as
        // the only name in scope
        let mut scratch = Pattern::new(1, vec!["__psi".to_string()], vec!["arg".to_string()])?;
        scratch.actions.clear();
        let expr = scratch.parse_expr(text)?;
        fn convert(expr: &TExpr) -> Result<PsiExpr, PatternError> {
            Ok(match expr {
                TExpr::Const(v) => PsiExpr::Const(v.clone()),
                TExpr::Env(_) => PsiExpr::Arg,
                TExpr::Add(a, b) => PsiExpr::Add(Box::new(convert(a)?), Box::new(convert(b)?)),
                TExpr::Mul(a, b) => PsiExpr::Mul(Box::new(convert(a)?), Box::new(convert(b)?)),
                TExpr::Div(a, b) => PsiExpr::Div(Box::new(convert(a)?), Box::new(convert(b)?)),
                TExpr::Neg(a) => PsiExpr::Neg(Box::new(convert(a)?)),
                TExpr::Slot { .. } | TExpr::MachineIndex | TExpr::Call { .. } => {
                    return Err(PatternError::Syntax {
                        pos: 0,
                        msg: "error functions range over `arg` and constants only".to_string(),
                    })
                }
            })
        }
        convert(&expr)
    }

    pub fn eval(&self, arg: &Value) -> Value {
        match self {
            PsiExpr::Arg => arg.clone(),
            PsiExpr::Const(v) => v.clone(),
            PsiExpr::Add(a, b) => a.eval(arg).add(&b.eval(arg)),
            PsiExpr::Mul(a, b) => a.eval(arg).mul(&b.eval(arg)),
            PsiExpr::Div(a, b) => a.eval(arg).div(&b.eval(arg)),
            PsiExpr::Neg(a) => a.eval(arg).neg(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("machine {0} has no next action: its period sequence is finished")]
    PeriodViolation(usize),
    #[error("global jump with machine {0} mid-sequence violates the period constraint")]
    PeriodConstraintViolation(usize),
    #[error("fault incompatible with {kind} action at machine {machine} position {position}")]
    IncompatibleFault {
        machine: usize,
        position: usize,
        kind: ActionKind,
    },
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// Choice made by a nondeterministic environment update at one global jump:
/// per machine and environment variable, the index of the selected
/// alternative (machine-major order).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct EnvChoice(pub Vec<usize>);

impl std::fmt::Display for EnvChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}",
            self.0
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(".")
        )
    }
}

/// A GCA system: the instantiated redundant machines, the period parameter,
/// the environment-update relation applied at the global jump, and the value
/// domains of the ports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GCASystem {
    pub pattern: Pattern,
    /// `actions[machine][position]`, resolved by instantiation.
    pub actions: Vec<Vec<Action>>,
    /// Period length in time units; one global tick.
    pub period: f64,
    /// Per-array value domains.
    pub domains: Vec<ValueDomain>,
    pub env_domains: Vec<ValueDomain>,
    /// `env_update[machine][env var]` lists the alternative update
    /// expressions; singleton lists are deterministic. Defaults to keeping
    /// the variable unchanged.
    pub env_update: Vec<Vec<Vec<CExpr>>>,
    /// Whether the global jump clears undelivered messages. Defaults to
    /// false: the jump definition lists no queue reset.
    pub flush_queues_at_jump: bool,
    pub trigger_table: TriggerTable,
    pub machine_names: Vec<String>,
    /// Initial value per array, replicated across slots.
    pub initial_values: Vec<Value>,
    pub initial_env: Vec<Value>,
}

impl GCASystem {
    pub fn new(pattern: Pattern, period: f64) -> Result<GCASystem, SemanticsError> {
        let actions = instantiate(&pattern)?;
        let n = pattern.n;
        let domains = vec![ValueDomain::FaultAbstraction; pattern.arrays.len()];
        let env_domains = vec![ValueDomain::FaultAbstraction; pattern.env_vars.len()];
        let env_update = (0..n)
            .map(|_| {
                (0..pattern.env_vars.len())
                    .map(|e| vec![CExpr::Env(EnvId(e))])
                    .collect()
            })
            .collect();
        let machine_names = (1..=n).map(|i| format!("m{i}")).collect();
        let initial_values = domains.iter().map(ValueDomain::default_value).collect();
        let initial_env = env_domains.iter().map(ValueDomain::default_value).collect();
        Ok(GCASystem {
            pattern,
            actions,
            period,
            domains,
            env_domains,
            env_update,
            flush_queues_at_jump: false,
            trigger_table: TriggerTable::default(),
            machine_names,
            initial_values,
            initial_env,
        })
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn k(&self) -> usize {
        self.pattern.actions.len()
    }

    pub fn machine_index(&self, name: &str) -> Option<usize> {
        self.machine_names.iter().position(|m| m == name)
    }

    /// Declares the update alternatives of one environment variable; the
    /// same template alternatives are instantiated on every machine.
    pub fn set_env_update(&mut self, env: EnvId, choices: &[TExpr]) -> Result<(), SemanticsError> {
        for machine in 0..self.n() {
            let resolved: Result<Vec<CExpr>, PatternError> = choices
                .iter()
                .map(|t| resolve_template(&self.pattern, t, machine))
                .collect();
            self.env_update[machine][env.0] = resolved?;
        }
        Ok(())
    }

    pub fn initial_config(&self) -> SystemConfig {
        let n = self.n();
        let machines = (0..n)
            .map(|_| MachineState {
                values: self
                    .initial_values
                    .iter()
                    .map(|v| vec![v.clone(); n])
                    .collect(),
                queue: Vec::new(),
                next: if self.k() > 0 { Some(0) } else { None },
                env: self.initial_env.clone(),
            })
            .collect();
        SystemConfig {
            machines,
            tick: 0,
            micro: 0,
        }
    }

    /// Executes machine `machine`'s next atomic action.
    pub fn exec_action(
        &self,
        config: &SystemConfig,
        machine: usize,
    ) -> Result<SystemConfig, SemanticsError> {
        self.exec_action_perturbed(config, machine, None)
    }

    /// Executes the next atomic action of `machine`, replacing its effect by
    /// the given perturbation when one is active.
    pub fn exec_action_perturbed(
        &self,
        config: &SystemConfig,
        machine: usize,
        perturbation: Option<&Perturbation>,
    ) -> Result<SystemConfig, SemanticsError> {
        let position = config.machines[machine]
            .next
            .ok_or(SemanticsError::PeriodViolation(machine))?;
        let action = &self.actions[machine][position];
        if let Some(p) = perturbation {
            if !p.compatible_with(action.kind()) {
                return Err(SemanticsError::IncompatibleFault {
                    machine,
                    position,
                    kind: action.kind(),
                });
            }
        }
        let mut next = config.clone();
        self.apply_effect(&mut next, machine, action, perturbation)?;
        next.machines[machine].next = if position + 1 < self.k() {
            Some(position + 1)
        } else {
            None
        };
        next.micro += 1;
        Ok(next)
    }

    fn apply_effect(
        &self,
        config: &mut SystemConfig,
        machine: usize,
        action: &Action,
        perturbation: Option<&Perturbation>,
    ) -> Result<(), SemanticsError> {
        if matches!(perturbation, Some(Perturbation::FailSilent)) {
            return Ok(());
        }
        let n = self.n();
        match action {
            Action::Assign { var, expr } => {
                let value = self.eval(&config.machines[machine], machine, expr)?;
                let value = match perturbation {
                    Some(Perturbation::WrongResult { psi }) => psi.apply(&value),
                    _ => value,
                };
                config.machines[machine].values[var.0][machine] = value;
            }
            Action::Send { var } => {
                let payload = config.machines[machine].values[var.0][machine].clone();
                for receiver in 0..n {
                    if receiver == machine {
                        continue;
                    }
                    let message = match perturbation {
                        Some(Perturbation::MessageLoss { skip }) if *skip == receiver => continue,
                        Some(Perturbation::Corruption { target, psi }) if *target == receiver => {
                            Message {
                                var: *var,
                                slot: machine,
                                sender: machine,
                                payload: psi.apply(&payload),
                            }
                        }
                        Some(Perturbation::Masquerade { target, claimed })
                            if *target == receiver =>
                        {
                            Message {
                                var: *var,
                                slot: *claimed,
                                sender: machine,
                                payload: payload.clone(),
                            }
                        }
                        _ => Message {
                            var: *var,
                            slot: machine,
                            sender: machine,
                            payload: payload.clone(),
                        },
                    };
                    config.machines[receiver].queue.push(message);
                }
            }
            Action::Receive { var } => {
                let state = &mut config.machines[machine];
                for sender in 0..n {
                    if sender == machine {
                        continue;
                    }
                    let mut last = None;
                    state.queue.retain(|msg| {
                        if msg.var == *var && msg.slot == sender {
                            last = Some(msg.payload.clone());
                            false
                        } else {
                            true
                        }
                    });
                    // no related message: the slot keeps its old value
                    if let Some(value) = last {
                        state.values[var.0][sender] = value;
                    }
                }
            }
        }
        Ok(())
    }

    /// The global periodic jump: reads each machine's slots, rewrites its
    /// environment, resets every cursor, and advances the tick. Returns one
    /// successor per environment choice, in canonical choice order.
    pub fn global_jump(
        &self,
        config: &SystemConfig,
    ) -> Result<Vec<(EnvChoice, SystemConfig)>, SemanticsError> {
        for (machine, state) in config.machines.iter().enumerate() {
            if state.next.is_some() {
                return Err(SemanticsError::PeriodConstraintViolation(machine));
            }
        }
        let n = self.n();
        let env_count = self.pattern.env_vars.len();
        // alternative counts in machine-major order
        let mut widths = Vec::with_capacity(n * env_count);
        for machine in 0..n {
            for env in 0..env_count {
                widths.push(self.env_update[machine][env].len().max(1));
            }
        }
        let mut successors = Vec::new();
        let mut choice = vec![0usize; widths.len()];
        loop {
            let mut next = config.clone();
            for machine in 0..n {
                let mut new_env = Vec::with_capacity(env_count);
                for env in 0..env_count {
                    let alternatives = &self.env_update[machine][env];
                    let idx = choice[machine * env_count + env];
                    let expr = &alternatives[idx.min(alternatives.len().saturating_sub(1))];
                    new_env.push(self.eval(&config.machines[machine], machine, expr)?);
                }
                next.machines[machine].env = new_env;
                next.machines[machine].next = if self.k() > 0 { Some(0) } else { None };
                if self.flush_queues_at_jump {
                    next.machines[machine].queue.clear();
                }
            }
            next.tick += 1;
            next.micro = 0;
            successors.push((EnvChoice(choice.clone()), next));

            // advance machine-major odometer
            let mut pos = choice.len();
            loop {
                if pos == 0 {
                    return Ok(successors);
                }
                pos -= 1;
                if choice[pos] + 1 < widths[pos] {
                    choice[pos] += 1;
                    for later in choice[pos + 1..].iter_mut() {
                        *later = 0;
                    }
                    break;
                }
            }
            if choice.is_empty() {
                return Ok(successors);
            }
        }
    }

    /// Evaluates an instantiated expression against one machine's state.
    pub fn eval(
        &self,
        state: &MachineState,
        machine: usize,
        expr: &CExpr,
    ) -> Result<Value, SemanticsError> {
        Ok(match expr {
            CExpr::Const(v) => v.clone(),
            CExpr::Env(id) => state.env[id.0].clone(),
            CExpr::Slot { var, slot } => state.values[var.0][*slot].clone(),
            CExpr::Add(a, b) => self
                .eval(state, machine, a)?
                .add(&self.eval(state, machine, b)?),
            CExpr::Mul(a, b) => self
                .eval(state, machine, a)?
                .mul(&self.eval(state, machine, b)?),
            CExpr::Div(a, b) => self
                .eval(state, machine, a)?
                .div(&self.eval(state, machine, b)?),
            CExpr::Neg(a) => self.eval(state, machine, a)?.neg(),
            CExpr::Call { builtin, args } => {
                let values: Vec<Value> = args
                    .iter()
                    .map(|a| self.eval(state, machine, a))
                    .collect::<Result<_, _>>()?;
                self.eval_builtin(*builtin, machine, &values)?
            }
        })
    }

    /// Dispatches a builtin call. For slot-list builtins the arguments carry
    /// the own value first, then the copies of machines `x+1, x+2, ..` around
    /// the ring (instantiation validated that shape).
    fn eval_builtin(
        &self,
        builtin: Builtin,
        machine: usize,
        args: &[Value],
    ) -> Result<Value, SemanticsError> {
        let n = self.n();
        let ring = |p: usize| (machine + p) % n;
        Ok(match builtin {
            Builtin::Tpa1 => {
                let received: BTreeMap<usize, Option<Value>> =
                    (1..n).map(|p| (ring(p), Some(args[p].clone()))).collect();
                test_port_absolute_round1(n, machine, &args[0], &received).to_value()
            }
            Builtin::Tpa2 => {
                let opinions: BTreeMap<usize, Option<FaultStatusVector>> = (0..n)
                    .map(|p| (ring(p), FaultStatusVector::from_value(&args[p], n)))
                    .collect();
                test_port_absolute_round2(n, &opinions).to_value()
            }
            Builtin::Trigger => match FaultStatusVector::from_value(&args[0], n) {
                Some(statuses) => redundancy_trigger(
                    &TriggerState { responsible: None },
                    &statuses,
                    &self.trigger_table,
                )
                .to_value(),
                None => TriggerState { responsible: None }.to_value(),
            },
            Builtin::Median => median_unify(&args[0], &args[1..])?,
            Builtin::Task => {
                if args.iter().any(Value::is_erroneous) {
                    Value::Erroneous
                } else {
                    Value::Correct
                }
            }
            Builtin::LivenessJudge => {
                let received: BTreeMap<usize, Option<Value>> =
                    (1..n).map(|p| (ring(p), Some(args[p].clone()))).collect();
                test_liveness(n, machine, &args[0], &received).to_value()
            }
        })
    }
}

pub(crate) fn resolve_template(
    pattern: &Pattern,
    expr: &TExpr,
    machine: usize,
) -> Result<CExpr, PatternError> {
    // instantiation of a single expression: reuse the pattern machinery by
    // wrapping it in a throwaway assign
    let mut scratch = pattern.clone();
    scratch.actions = vec![crate::pattern::ActionTemplate::Assign {
        var: VarId(0),
        expr: expr.clone(),
    }];
    let machines = instantiate(&scratch)?;
    match machines.into_iter().nth(machine) {
        Some(mut actions) => match actions.pop() {
            Some(Action::Assign { expr, .. }) => Ok(expr),
            _ => unreachable!("assign template instantiates to assign"),
        },
        None => unreachable!("machine index within n"),
    }
}
