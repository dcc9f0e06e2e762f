//! Explicit-state checking of the synchronized system composed with its
//! fault automaton: breadth-first product construction, invariant checking
//! with shortest counterexamples, temporal checking by lasso enumeration,
//! and the cross-validation harness that replays the preservation argument
//! on desk-scale models.
//!
//! Temporal checking enumerates lassos with simple stems and simple cycles
//! up to the graph size. That is complete for the reachability- and
//! cycle-shaped violations of the properties this workbench checks; deeply
//! nested fairness-style formulas can require revisiting cycles and are out
//! of scope here, which is the documented cost of avoiding an automaton
//! product.

use crate::exec::{
    composite_step, enumerate_traces, extract_script, interleavings_of, run_sync_scripted,
    ExecError, FaultContext, Interleaving, InterleavingFilter, WinnerPolicy,
};
use crate::fault::{step_fault_automaton, FaultAutomaton};
use crate::formula::{
    check_admissible, eval_atom, eval_formula, AtomState, Formula, FormulaError, ProjectedView,
    Rejection,
};
use crate::semantics::{GCASystem, MachineState, SemanticsError, SystemConfig};
use crate::trace::{project, stutter_equiv, StepLabel, Trace};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error("formula is not admissible: {0}")]
    NotAdmissible(Rejection),
    #[error("invariant checking needs a propositional formula, got `{0}`")]
    NotPropositional(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// One node of the product graph: a configuration of the synchronized
/// system together with the fault automaton's location. The period counter
/// is excluded from node identity so periodic behavior closes into cycles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub config: SystemConfig,
    pub location: usize,
}

type NodeKey = (Vec<MachineState>, usize);

/// Explicit product graph of the synchronized system and fault automaton.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateGraph {
    pub nodes: Vec<Node>,
    /// `edges[node]`, sorted by label for reproducible traversals.
    pub edges: Vec<Vec<(StepLabel, usize)>>,
    pub initial: Vec<usize>,
    /// Breadth-first discovery: `parent[v]` is the edge that first reached
    /// `v`, which realizes a shortest, lexicographically least path.
    pub parent: Vec<Option<(usize, StepLabel)>>,
    /// False when the node cap stopped exploration; verdicts over an
    /// incomplete graph are only bounded claims.
    pub complete: bool,
}

impl StateGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Rebuilds the breadth-first path from an initial node to `target`.
    pub fn path_to(&self, target: usize) -> Trace {
        let mut labels = Vec::new();
        let mut nodes = vec![target];
        let mut at = target;
        while let Some((from, label)) = &self.parent[at] {
            labels.push(label.clone());
            nodes.push(*from);
            at = *from;
        }
        nodes.reverse();
        labels.reverse();
        let mut trace = Trace::new(self.nodes[nodes[0]].config.clone());
        for (label, node) in labels.into_iter().zip(nodes.into_iter().skip(1)) {
            trace.push(label, self.nodes[node].config.clone());
        }
        trace
    }
}

/// Builds the product graph breadth-first from the initial configurations
/// under every initial automaton location. Composite steps, environment
/// branches, fault branches and contested delivery orders are explicit
/// edges; there is no other nondeterminism in the synchronized model.
pub fn build_product(
    system: &GCASystem,
    automaton: &FaultAutomaton,
    bound: Option<usize>,
) -> Result<StateGraph, CheckError> {
    let cap = bound.unwrap_or(usize::MAX);
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Vec<(StepLabel, usize)>> = Vec::new();
    let mut parent: Vec<Option<(usize, StepLabel)>> = Vec::new();
    let mut index: HashMap<NodeKey, usize> = HashMap::new();
    let mut initial = Vec::new();
    let mut complete = true;
    let mut queue = VecDeque::new();

    let mut intern = |config: SystemConfig,
                      location: usize,
                      from: Option<(usize, StepLabel)>,
                      nodes: &mut Vec<Node>,
                      edges: &mut Vec<Vec<(StepLabel, usize)>>,
                      parent: &mut Vec<Option<(usize, StepLabel)>>,
                      queue: &mut VecDeque<usize>,
                      complete: &mut bool|
     -> Option<usize> {
        let key = (config.machines.clone(), location);
        match index.get(&key) {
            Some(&id) => Some(id),
            None => {
                if nodes.len() >= cap {
                    *complete = false;
                    return None;
                }
                let id = nodes.len();
                nodes.push(Node { config, location });
                edges.push(Vec::new());
                parent.push(from);
                index.insert(key, id);
                queue.push_back(id);
                Some(id)
            }
        }
    };

    let init_config = system.initial_config();
    for &location in &automaton.initial {
        if let Some(id) = intern(
            init_config.clone(),
            location,
            None,
            &mut nodes,
            &mut edges,
            &mut parent,
            &mut queue,
            &mut complete,
        ) {
            initial.push(id);
        }
    }

    while let Some(id) = queue.pop_front() {
        let node = nodes[id].clone();
        let mut successors: Vec<(StepLabel, SystemConfig, usize)> = Vec::new();
        if node.config.machines.iter().all(|m| m.next.is_none()) {
            // period boundary: global jump then one automaton step
            let mut locations = step_fault_automaton(automaton, node.location);
            locations.sort_unstable();
            for (choice, config) in system.global_jump(&node.config)? {
                for &location in &locations {
                    successors.push((
                        StepLabel::Jump {
                            choice: choice.clone(),
                            location: Some(location),
                        },
                        config.clone(),
                        location,
                    ));
                }
            }
        } else {
            let position = node.config.machines[0]
                .next
                .expect("synchronized machines share their cursor");
            let active: BTreeMap<(usize, usize), usize> = automaton
                .active_faults(node.location)
                .into_iter()
                .map(|idx| {
                    let fault = &automaton.faults[idx];
                    ((fault.machine, fault.position), idx)
                })
                .collect();
            let outcomes = composite_step(
                system,
                &node.config,
                node.config.tick as usize,
                position,
                &active,
                &automaton.faults,
                &WinnerPolicy::Explore,
            )?;
            for (label, config) in outcomes {
                successors.push((label, config, node.location));
            }
        }
        successors.sort_by(|a, b| a.0.cmp(&b.0));
        for (label, config, location) in successors {
            if let Some(to) = intern(
                config,
                location,
                Some((id, label.clone())),
                &mut nodes,
                &mut edges,
                &mut parent,
                &mut queue,
                &mut complete,
            ) {
                edges[id].push((label, to));
            }
        }
    }

    Ok(StateGraph {
        nodes,
        edges,
        initial,
        parent,
        complete,
    })
}

/// Evaluates a propositional formula in one state.
pub fn eval_propositional<S: AtomState>(
    system: &GCASystem,
    formula: &Formula,
    state: &S,
) -> Result<bool, CheckError> {
    match formula {
        Formula::Atom(a) => Ok(eval_atom(a, system, state)?),
        Formula::Not(a) => Ok(!eval_propositional(system, a, state)?),
        Formula::And(a, b) => {
            Ok(eval_propositional(system, a, state)? && eval_propositional(system, b, state)?)
        }
        Formula::Or(a, b) => {
            Ok(eval_propositional(system, a, state)? || eval_propositional(system, b, state)?)
        }
        Formula::Implies(a, b) => {
            Ok(!eval_propositional(system, a, state)? || eval_propositional(system, b, state)?)
        }
        other => Err(CheckError::NotPropositional(other.to_string())),
    }
}

/// Verdict of a graph check; when the graph was bounded the verdict is only
/// valid for the explored part.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantResult {
    /// A violating path and the automaton location its initial node carries.
    pub verdict: Option<(Trace, usize)>,
    pub bounded: bool,
}

impl InvariantResult {
    pub fn holds(&self) -> bool {
        self.verdict.is_none()
    }
}

/// Checks a propositional formula at every reachable node. On violation
/// returns the breadth-first path to the first violating node, which is a
/// shortest counterexample with deterministic tie-breaking.
pub fn check_invariant(
    system: &GCASystem,
    graph: &StateGraph,
    prop: &Formula,
) -> Result<InvariantResult, CheckError> {
    for (id, node) in graph.nodes.iter().enumerate() {
        if !eval_propositional(system, prop, &node.config)? {
            let trace = graph.path_to(id);
            let mut root = id;
            while let Some((from, _)) = &graph.parent[root] {
                root = *from;
            }
            return Ok(InvariantResult {
                verdict: Some((trace, graph.nodes[root].location)),
                bounded: !graph.complete,
            });
        }
    }
    Ok(InvariantResult {
        verdict: None,
        bounded: !graph.complete,
    })
}

/// A stem plus cycle witnessing a temporal violation. The trace's final
/// snapshot revisits the node at `loop_to`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoTrace {
    pub trace: Trace,
    pub loop_to: usize,
    /// Automaton location of the stem's first node.
    pub initial_location: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtlResult {
    pub verdict: Option<LassoTrace>,
    /// True when the graph was bounded or the lasso cap was hit.
    pub bounded: bool,
    pub lassos_checked: usize,
}

impl LtlResult {
    pub fn holds(&self) -> bool {
        self.verdict.is_none()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    /// Stop after examining this many lassos and report a bounded verdict.
    pub max_lassos: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            max_lassos: 200_000,
        }
    }
}

/// Checks a temporal formula on every infinite path of the graph by
/// enumerating lassos (simple-path stem, simple cycle) in deterministic
/// label order and evaluating the formula on each ultimately-periodic word.
pub fn check_ltl(
    system: &GCASystem,
    graph: &StateGraph,
    formula: &Formula,
    options: LassoOptions,
) -> Result<LtlResult, CheckError> {
    let mut checked = 0usize;
    let mut capped = false;

    struct Dfs<'a> {
        system: &'a GCASystem,
        graph: &'a StateGraph,
        formula: &'a Formula,
        max: usize,
    }

    impl Dfs<'_> {
        #[allow(clippy::too_many_arguments)]
        fn walk(
            &self,
            path: &mut Vec<usize>,
            labels: &mut Vec<StepLabel>,
            on_path: &mut Vec<Option<usize>>,
            checked: &mut usize,
            steps: &mut usize,
            capped: &mut bool,
        ) -> Result<Option<LassoTrace>, CheckError> {
            let here = *path.last().expect("nonempty path");
            for (label, to) in &self.graph.edges[here] {
                // edge traversals are bounded too: the number of simple
                // paths can exceed the lasso count by far
                *steps += 1;
                if *checked >= self.max || *steps >= self.max.saturating_mul(8) {
                    *capped = true;
                    return Ok(None);
                }
                if let Some(loop_to) = on_path[*to] {
                    *checked += 1;
                    let states: Vec<&SystemConfig> =
                        path.iter().map(|&v| &self.graph.nodes[v].config).collect();
                    let holds = eval_formula(self.system, self.formula, &states, Some(loop_to))?;
                    if !holds {
                        let mut trace = Trace::new(self.graph.nodes[path[0]].config.clone());
                        for (l, v) in labels.iter().zip(path.iter().skip(1)) {
                            trace.push(l.clone(), self.graph.nodes[*v].config.clone());
                        }
                        trace.push(label.clone(), self.graph.nodes[*to].config.clone());
                        return Ok(Some(LassoTrace {
                            trace,
                            loop_to,
                            initial_location: self.graph.nodes[path[0]].location,
                        }));
                    }
                } else {
                    on_path[*to] = Some(path.len());
                    path.push(*to);
                    labels.push(label.clone());
                    let found = self.walk(path, labels, on_path, checked, steps, capped)?;
                    labels.pop();
                    path.pop();
                    on_path[*to] = None;
                    if found.is_some() {
                        return Ok(found);
                    }
                }
            }
            Ok(None)
        }
    }

    let dfs = Dfs {
        system,
        graph,
        formula,
        max: options.max_lassos,
    };
    let mut steps = 0usize;
    for &start in &graph.initial {
        let mut on_path = vec![None; graph.nodes.len()];
        on_path[start] = Some(0);
        let mut path = vec![start];
        let mut labels = Vec::new();
        if let Some(lasso) = dfs.walk(
            &mut path,
            &mut labels,
            &mut on_path,
            &mut checked,
            &mut steps,
            &mut capped,
        )? {
            return Ok(LtlResult {
                verdict: Some(lasso),
                bounded: !graph.complete || capped,
                lassos_checked: checked,
            });
        }
    }
    Ok(LtlResult {
        verdict: None,
        bounded: !graph.complete || capped,
        lassos_checked: checked,
    })
}

/// Replays a trace step by step through the semantics: every label must be
/// realizable from its predecessor snapshot and produce exactly the recorded
/// successor. Used to validate reported counterexamples.
pub fn replay(
    system: &GCASystem,
    automaton: &FaultAutomaton,
    trace: &Trace,
) -> Result<bool, CheckError> {
    let mut location: Option<usize> = None;
    for (i, label) in trace.labels.iter().enumerate() {
        let before = &trace.snapshots[i];
        let after = &trace.snapshots[i + 1];
        let ok = match label {
            StepLabel::Micro {
                machine,
                position,
                fault,
            } => {
                if before.machines[*machine].next != Some(*position) {
                    false
                } else {
                    let next = match fault {
                        Some(idx) => system.exec_action_perturbed(
                            before,
                            *machine,
                            Some(&automaton.faults[*idx].perturbation()),
                        )?,
                        None => system.exec_action(before, *machine)?,
                    };
                    next == *after
                }
            }
            StepLabel::Composite {
                position, faults, ..
            } => {
                let active: BTreeMap<(usize, usize), usize> = faults
                    .iter()
                    .map(|(m, idx)| ((*m, *position), *idx))
                    .collect();
                let outcomes = composite_step(
                    system,
                    before,
                    before.tick as usize,
                    *position,
                    &active,
                    &automaton.faults,
                    &WinnerPolicy::Explore,
                )?;
                outcomes
                    .iter()
                    .any(|(l, config)| l == label && config == after)
            }
            StepLabel::Jump {
                choice,
                location: to,
            } => {
                let successors = system.global_jump(before)?;
                let matched = successors
                    .iter()
                    .any(|(c, config)| c == choice && config == after);
                let legal_step = match (location, to) {
                    (Some(from), Some(to)) => step_fault_automaton(automaton, from).contains(to),
                    _ => true,
                };
                location = *to;
                matched && legal_step
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One interleaving whose projection or verdict disagreed with the
/// synchronized twin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub interleavings: Vec<Interleaving>,
    pub machine: usize,
    pub stutter_equivalent: bool,
    pub async_verdict: bool,
    pub sync_verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossValidationReport {
    pub interleavings_checked: usize,
    pub divergences: Vec<Divergence>,
    /// False when the enumeration cap was hit: the report covers a subset.
    pub complete: bool,
    /// The property's machine, when the formula mentions one.
    pub machine: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CrossValidationOptions<'a> {
    pub faults: Option<FaultContext<'a>>,
    /// Check every interleaving instead of only deterministic-assumption
    /// compliant ones; divergences are then expected, demonstrating the
    /// scheduling nondeterminism the assumption removes.
    pub all_interleavings: bool,
    pub limit: Option<usize>,
}

/// The executable statement of the preservation theorem at desk scale: every
/// admitted interleaving, with environment and fault choices held fixed, has
/// machine-local projections stutter-equivalent to its synchronized twin and
/// the same verdict for the property. Returns the per-interleaving tally.
pub fn cross_validate_preservation(
    system: &GCASystem,
    formula: &Formula,
    periods: usize,
    options: CrossValidationOptions,
) -> Result<CrossValidationReport, CheckError> {
    let admissible = check_admissible(formula, system).map_err(CheckError::NotAdmissible)?;
    let filter = if options.all_interleavings {
        InterleavingFilter::All
    } else {
        InterleavingFilter::DaCompliant
    };
    let enumeration = enumerate_traces(system, periods, options.limit, options.faults, filter)?;
    let mut report = CrossValidationReport {
        interleavings_checked: enumeration.traces.len(),
        divergences: Vec::new(),
        complete: enumeration.complete,
        machine: admissible.machine,
    };
    for trace in &enumeration.traces {
        let script = extract_script(system, trace);
        let twin = run_sync_scripted(system, periods, options.faults, &script)?;
        for machine in 0..system.n() {
            let async_proj = project(trace, machine);
            let sync_proj = project(&twin, machine);
            let equivalent = stutter_equiv(&async_proj.states, &sync_proj.states);
            let relevant = admissible.machine.is_none_or(|m| m == machine);
            let (async_verdict, sync_verdict) = if relevant {
                let async_states: Vec<ProjectedView> = async_proj
                    .states
                    .iter()
                    .map(|s| ProjectedView { machine, state: s })
                    .collect();
                let sync_states: Vec<ProjectedView> = sync_proj
                    .states
                    .iter()
                    .map(|s| ProjectedView { machine, state: s })
                    .collect();
                (
                    eval_formula(system, formula, &async_states, None)?,
                    eval_formula(system, formula, &sync_states, None)?,
                )
            } else {
                (true, true)
            };
            if !equivalent || async_verdict != sync_verdict {
                report.divergences.push(Divergence {
                    interleavings: interleavings_of(trace),
                    machine,
                    stutter_equivalent: equivalent,
                    async_verdict,
                    sync_verdict,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault::{FaultRun, FaultSpec, FaultType, Location};
    use crate::formula::parse_formula;
    use crate::pattern::Pattern;
    use crate::semantics::Psi;
    use crate::value::{Value, ValueDomain};
    use std::collections::BTreeSet;

    fn fig2(n: usize) -> GCASystem {
        let mut p = Pattern::new(n, vec!["a".into(), "b".into()], vec!["e".into()]).unwrap();
        p.push_action("a[x] <- e + x").unwrap();
        p.push_action("send(a[x])").unwrap();
        p.push_action("receive(a)").unwrap();
        let mut sys = GCASystem::new(p, 10.0).unwrap();
        sys.domains = vec![ValueDomain::bounded(-100, 100).unwrap(); 2];
        sys.env_domains = vec![ValueDomain::bounded(-100, 100).unwrap()];
        sys.initial_values = vec![Value::Int(0); 2];
        sys.initial_env = vec![Value::Int(10)];
        sys
    }

    #[test]
    fn fault_free_deterministic_graph_is_one_cycle_per_period() {
        let sys = fig2(3);
        let graph = build_product(&sys, &FaultAutomaton::fault_free(), None).unwrap();
        assert!(graph.complete);
        for edges in &graph.edges {
            assert_eq!(edges.len(), 1, "deterministic model");
        }
        // after a lead-in from the initial values the graph settles into a
        // single cycle of k composite steps plus the jump
        let mut seen = vec![usize::MAX; graph.node_count()];
        let mut at = graph.initial[0];
        let mut step = 0usize;
        let cycle_len = loop {
            if seen[at] != usize::MAX {
                break step - seen[at];
            }
            seen[at] = step;
            step += 1;
            at = graph.edges[at][0].1;
        };
        assert_eq!(cycle_len, sys.k() + 1);
    }

    /// Naive depth-first reachability in recursive style, as an independent
    /// count oracle for the breadth-first construction.
    fn naive_explore(
        system: &GCASystem,
        automaton: &FaultAutomaton,
        config: &SystemConfig,
        location: usize,
        seen: &mut BTreeSet<(Vec<MachineState>, usize)>,
    ) {
        if !seen.insert((config.machines.clone(), location)) {
            return;
        }
        if config.machines.iter().all(|m| m.next.is_none()) {
            for (_, next) in system.global_jump(config).unwrap() {
                for succ in step_fault_automaton(automaton, location) {
                    naive_explore(system, automaton, &next, succ, seen);
                }
            }
        } else {
            let position = config.machines[0].next.unwrap();
            let active: BTreeMap<(usize, usize), usize> = automaton
                .active_faults(location)
                .into_iter()
                .map(|idx| {
                    let f = &automaton.faults[idx];
                    ((f.machine, f.position), idx)
                })
                .collect();
            let outcomes = composite_step(
                system,
                config,
                config.tick as usize,
                position,
                &active,
                &automaton.faults,
                &WinnerPolicy::Explore,
            )
            .unwrap();
            for (_, next) in outcomes {
                naive_explore(system, automaton, &next, location, seen);
            }
        }
    }

    fn faulty_automaton(sys: &GCASystem) -> FaultAutomaton {
        let mk = |name: &str, flags: &[&str]| Location {
            name: name.to_string(),
            activates: flags.iter().map(|s| s.to_string()).collect(),
        };
        let mut edges = BTreeSet::new();
        for from in 0..3usize {
            for to in 0..3usize {
                edges.insert((from, to));
            }
        }
        let automaton = FaultAutomaton {
            locations: vec![mk("ok", &[]), mk("m1_bad", &["f1"]), mk("m2_bad", &["f2"])],
            edges,
            initial: vec![0],
            faults: vec![
                FaultSpec {
                    act: "f1".to_string(),
                    fault_type: FaultType::WrongResult,
                    machine: 0,
                    position: 0,
                    k: None,
                    k_prime: None,
                    psi: Psi::Map(crate::semantics::PsiExpr::Const(Value::Int(-7))),
                },
                FaultSpec {
                    act: "f2".to_string(),
                    fault_type: FaultType::FailSilent,
                    machine: 1,
                    position: 1,
                    k: None,
                    k_prime: None,
                    psi: Psi::ForceErroneous,
                },
            ],
            ltbf: None,
        };
        automaton.validate(sys).unwrap();
        automaton
    }

    #[test]
    fn node_count_matches_the_naive_recursive_explorer() {
        let sys = fig2(3);
        let automaton = faulty_automaton(&sys);
        let graph = build_product(&sys, &automaton, None).unwrap();
        assert!(graph.complete);
        let mut seen = BTreeSet::new();
        for &loc in &automaton.initial {
            naive_explore(&sys, &automaton, &sys.initial_config(), loc, &mut seen);
        }
        assert_eq!(graph.node_count(), seen.len());
        assert!(
            graph.node_count() > sys.k() + 1,
            "fault branching widens the graph"
        );
    }

    #[test]
    fn canonical_hashing_merges_structurally_equal_configs() {
        let sys = fig2(3);
        let automaton = faulty_automaton(&sys);
        let graph = build_product(&sys, &automaton, None).unwrap();
        let mut keys = BTreeSet::new();
        for node in &graph.nodes {
            assert!(
                keys.insert((node.config.machines.clone(), node.location)),
                "duplicate node for one canonical key"
            );
        }
        // every node reachable from an initial node by construction: parents
        // chain back to an initial node
        for id in 0..graph.node_count() {
            let mut at = id;
            let mut steps = 0;
            while let Some((from, _)) = &graph.parent[at] {
                at = *from;
                steps += 1;
                assert!(steps <= graph.node_count(), "parent chain cycles");
            }
            assert!(graph.initial.contains(&at));
        }
    }

    #[test]
    fn bounded_exploration_is_flagged() {
        let sys = fig2(3);
        let automaton = faulty_automaton(&sys);
        let graph = build_product(&sys, &automaton, Some(3)).unwrap();
        assert!(!graph.complete);
        assert_eq!(graph.node_count(), 3);
        let f = parse_formula("1 = 1").unwrap();
        let result = check_invariant(&sys, &graph, &f).unwrap();
        assert!(result.holds() && result.bounded);
    }

    #[test]
    fn trivially_true_atom_holds_on_any_graph() {
        let sys = fig2(2);
        let graph = build_product(&sys, &FaultAutomaton::fault_free(), None).unwrap();
        let f = parse_formula("3 = 3").unwrap();
        assert!(check_invariant(&sys, &graph, &f).unwrap().holds());
        let f = parse_formula("G(1 = 1)").unwrap();
        assert!(matches!(
            check_invariant(&sys, &graph, &f),
            Err(CheckError::NotPropositional(_))
        ));
    }

    #[test]
    fn invariant_counterexample_is_shortest_and_replays() {
        let sys = fig2(3);
        let automaton = faulty_automaton(&sys);
        let graph = build_product(&sys, &automaton, None).unwrap();
        // machine 1's own a-slot becomes -7 only under fault f1
        let f = parse_formula("!(m1.a = -7)").unwrap();
        let result = check_invariant(&sys, &graph, &f).unwrap();
        let (trace, _) = result.verdict.expect("fault reaches the violation");
        // shortest: one period to enter the faulty location, then the assign
        let depth = trace.labels.len();
        // need one jump (into m1_bad) and one composite assign step at least
        assert!(depth >= 2);
        for shorter in 0..graph.node_count() {
            let path = graph.path_to(shorter);
            if path.labels.len() < depth {
                let violating = !eval_propositional(&sys, &f, &path.last().clone()).unwrap();
                assert!(!violating, "a shorter violating path exists");
            }
        }
        assert!(replay(&sys, &automaton, &trace).unwrap());
    }

    #[test]
    fn ltl_globally_agrees_with_invariant_checking_on_a_corpus() {
        let sys = fig2(3);
        let automaton = faulty_automaton(&sys);
        let graph = build_product(&sys, &automaton, None).unwrap();
        for text in [
            "!(m1.a = -7)",
            "!(m2.a = -7)",
            "m1.b = 0",
            "!(m1.a = 13)",
            "!(m3.a = 11)",
        ] {
            let prop = parse_formula(text).unwrap();
            let as_g = Formula::Globally(Box::new(prop.clone()));
            let inv = check_invariant(&sys, &graph, &prop).unwrap();
            let ltl = check_ltl(&sys, &graph, &as_g, LassoOptions::default()).unwrap();
            assert_eq!(
                inv.holds(),
                ltl.holds(),
                "G({text}) disagrees with invariant checking"
            );
        }
    }

    #[test]
    fn eventually_violation_yields_a_lasso() {
        let sys = fig2(2);
        let graph = build_product(&sys, &FaultAutomaton::fault_free(), None).unwrap();
        // machine 1's slot never becomes 99: F(a = 99) fails with a lasso
        let f = parse_formula("F(m1.a = 99)").unwrap();
        let result = check_ltl(&sys, &graph, &f, LassoOptions::default()).unwrap();
        let lasso = result
            .verdict
            .expect("unreachable target yields a counterexample");
        assert!(lasso.loop_to < lasso.trace.snapshots.len());
        // the lasso closes: final snapshot equals the loop entry up to tick
        let first = &lasso.trace.snapshots[lasso.loop_to];
        let last = lasso.trace.snapshots.last().unwrap();
        assert_eq!(first.machines, last.machines);
        // and a satisfiable eventuality holds
        let f = parse_formula("F(m1.a = 11)").unwrap();
        assert!(check_ltl(&sys, &graph, &f, LassoOptions::default())
            .unwrap()
            .holds());
    }

    #[test]
    fn cross_validation_reports_zero_divergences_on_da_runs() {
        let sys = fig2(3);
        let f = parse_formula("G((m1.next = 0) -> (m1.a = 11))").unwrap();
        let report =
            cross_validate_preservation(&sys, &f, 1, CrossValidationOptions::default()).unwrap();
        assert!(report.complete);
        assert!(report.interleavings_checked > 0);
        assert_eq!(report.divergences, vec![]);
        assert_eq!(report.machine, Some(0));
    }

    #[test]
    fn unfiltered_interleavings_reveal_scheduling_nondeterminism() {
        // receive scheduled before the matching send changes machine state:
        // the all-interleavings mode must observe stutter-inequivalence
        let sys = fig2(2);
        let f = parse_formula("G(1 = 1)").unwrap();
        let report = cross_validate_preservation(
            &sys,
            &f,
            1,
            CrossValidationOptions {
                all_interleavings: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            !report.divergences.is_empty(),
            "non-DA schedules must diverge from the synchronized model"
        );
        assert!(report
            .divergences
            .iter()
            .all(|d| !d.stutter_equivalent || d.async_verdict == d.sync_verdict));
    }

    #[test]
    fn single_machine_model_is_trivially_equivalent() {
        let sys = fig2(1);
        let f = parse_formula("G(m1.a = 11)").unwrap();
        let report =
            cross_validate_preservation(&sys, &f, 2, CrossValidationOptions::default()).unwrap();
        assert_eq!(report.interleavings_checked, 1);
        assert!(report.divergences.is_empty());
    }

    #[test]
    fn fault_agreement_with_runs_held_fixed() {
        // two machines keep the interleaving product small across two periods
        let sys = fig2(2);
        let automaton = faulty_automaton(&sys);
        for run in FaultRun::enumerate(&automaton, 2) {
            let ctx = FaultContext {
                automaton: &automaton,
                run: &run,
            };
            let f = parse_formula("G((m2.next = 0) -> (m2.a = 12))").unwrap();
            let report = cross_validate_preservation(
                &sys,
                &f,
                2,
                CrossValidationOptions {
                    faults: Some(ctx),
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(report.complete);
            assert_eq!(
                report.divergences,
                vec![],
                "fault run {:?} diverged",
                run.locations
            );
        }
    }

    #[test]
    fn verdicts_are_monotone_under_fault_removal() {
        let sys = fig2(3);
        let automaton = faulty_automaton(&sys);
        let with_faults = build_product(&sys, &automaton, None).unwrap();
        let without = build_product(&sys, &FaultAutomaton::fault_free(), None).unwrap();
        for text in ["!(m1.a = -7)", "m2.b = 0", "!(m3.a = 12)"] {
            let f = parse_formula(text).unwrap();
            if check_invariant(&sys, &with_faults, &f).unwrap().holds() {
                assert!(
                    check_invariant(&sys, &without, &f).unwrap().holds(),
                    "removing faults broke {text}"
                );
            }
        }
    }
}
