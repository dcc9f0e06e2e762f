//! The model file format: one TOML document declaring the machine pattern,
//! redundancy, period, value domains, fault automaton, properties and an
//! optional timed schedule. Mechanism macros (`TestPortAbsolute`,
//! `RedundancyTrigger`, `MedianUnify`, `TestLiveness`) expand into plain
//! actions at load time, so mechanisms stay data rather than engine code.

use gca_core::{
    parse_formula, parse_value, EnvId, FaultAutomaton, FaultSpec, FaultType, Formula, GCASystem,
    Location, Pattern, Psi, PsiExpr, ScheduleSlot, TimedSchedule, TriggerTable, ValueDomain,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    TomlOut(#[from] toml::ser::Error),
    #[error("{0}")]
    Pattern(#[from] gca_core::PatternError),
    #[error("{0}")]
    Semantics(#[from] gca_core::SemanticsError),
    #[error("fault model: {0}")]
    Fault(#[from] gca_core::FaultError),
    #[error("property `{name}`: {source}")]
    Property {
        name: String,
        source: gca_core::FormulaError,
    },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::Invalid(msg.into())
}

/// Serialized form of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub system: SystemSection,
    pub pattern: PatternSection,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_env: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub env_update: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub domain_bounds: BTreeMap<String, (i64, i64)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trigger_table: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faults: Option<FaultsSection>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default)]
    pub name: Option<String>,
    pub redundancy: usize,
    pub period: f64,
    /// `fault-abstraction` (default) or `bounded-int`.
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default)]
    pub flush_queues_at_jump: Option<bool>,
    #[serde(default)]
    pub machines: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSection {
    pub arrays: Vec<String>,
    #[serde(default)]
    pub env: Vec<String>,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultsSection {
    #[serde(default)]
    pub ltbf: Option<f64>,
    #[serde(default)]
    pub initial: Option<Vec<String>>,
    #[serde(default)]
    pub locations: Vec<LocationEntry>,
    #[serde(default)]
    pub edges: Vec<EdgeEntry>,
    #[serde(default)]
    pub specs: Vec<FaultEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationEntry {
    pub name: String,
    #[serde(default)]
    pub activates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub from: String,
    pub to: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEntry {
    pub act: String,
    #[serde(rename = "type")]
    pub fault_type: String,
    /// 1-based machine index.
    pub machine: usize,
    /// 1-based position in the expanded action sequence.
    pub position: usize,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub k_prime: Option<usize>,
    /// Error function over `arg`; defaults to forcing `Erroneous`.
    #[serde(default)]
    pub psi: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub tau_net: f64,
    pub slots: Vec<SlotEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotEntry {
    /// 1-based machine; absent means the slot applies to every machine.
    #[serde(default)]
    pub machine: Option<usize>,
    /// 1-based action position.
    pub position: usize,
    pub start: f64,
    pub end: f64,
}

/// A fully resolved model.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub name: String,
    pub system: GCASystem,
    pub automaton: FaultAutomaton,
    /// Name-sorted, as reports list them.
    pub properties: Vec<(String, Formula)>,
    pub schedule: Option<TimedSchedule>,
}

/// Expands one mechanism macro reference into plain actions, or returns the
/// action text unchanged.
pub fn expand_action(text: &str, n: usize) -> Result<Vec<String>, ModelError> {
    let trimmed = text.trim();
    let Some(open) = trimmed.find('(') else {
        return Ok(vec![trimmed.to_string()]);
    };
    let head = trimmed[..open].trim();
    if !matches!(
        head,
        "TestPortAbsolute" | "RedundancyTrigger" | "MedianUnify" | "TestLiveness"
    ) {
        return Ok(vec![trimmed.to_string()]);
    }
    let inner = trimmed[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| invalid(format!("unterminated macro call `{trimmed}`")))?;
    let mut args = BTreeMap::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| invalid(format!("macro argument `{part}` is not key=value")))?;
        args.insert(key.trim().to_string(), value.trim().to_string());
    }
    let want = |key: &str| -> Result<String, ModelError> {
        args.get(key)
            .cloned()
            .ok_or_else(|| invalid(format!("macro `{head}` needs argument `{key}`")))
    };
    let slot_list = |array: &str| -> String {
        let mut parts = vec![format!("{array}[x]")];
        parts.extend((1..n).map(|i| format!("{array}[x+{i}]")));
        parts.join(", ")
    };
    let actions = match head {
        "TestPortAbsolute" => {
            let port = want("port")?;
            let judge = want("judge")?;
            let status = want("status")?;
            vec![
                format!("send({port}[x])"),
                format!("receive({port})"),
                format!("{judge}[x] <- tpa1({})", slot_list(&port)),
                format!("send({judge}[x])"),
                format!("receive({judge})"),
                format!("{status}[x] <- tpa2({})", slot_list(&judge)),
            ]
        }
        "RedundancyTrigger" => {
            let status = want("status")?;
            let out = want("out")?;
            vec![format!("{out}[x] <- trigger({status}[x])")]
        }
        "MedianUnify" => {
            let port = want("port")?;
            vec![
                format!("send({port}[x])"),
                format!("receive({port})"),
                format!("{port}[x] <- median({})", slot_list(&port)),
            ]
        }
        "TestLiveness" => {
            let beacon = want("beacon")?;
            let status = want("status")?;
            vec![
                format!("{beacon}[x] <- 1 + (-{beacon}[x])"),
                format!("send({beacon}[x])"),
                format!("receive({beacon})"),
                format!("{status}[x] <- liveness_judge({})", slot_list(&beacon)),
            ]
        }
        _ => unreachable!("matched above"),
    };
    Ok(actions)
}

fn parse_fault_type(text: &str) -> Result<FaultType, ModelError> {
    Ok(match text {
        "wrong-result" => FaultType::WrongResult,
        "fail-silent" => FaultType::FailSilent,
        "message-loss" => FaultType::MessageLoss,
        "corruption" => FaultType::Corruption,
        "masquerade" => FaultType::Masquerade,
        other => {
            return Err(invalid(format!(
                "unknown fault type `{other}` (wrong-result, fail-silent, message-loss, corruption, masquerade)"
            )))
        }
    })
}

/// Parses a trigger-table key: `none` or a comma-separated 1-based list of
/// faulty machines.
fn parse_faulty_set(key: &str, n: usize) -> Result<BTreeSet<usize>, ModelError> {
    if key.trim() == "none" {
        return Ok(BTreeSet::new());
    }
    let mut set = BTreeSet::new();
    for part in key.split(',') {
        let idx: usize = part
            .trim()
            .parse()
            .map_err(|_| invalid(format!("bad trigger-table key `{key}`")))?;
        if idx == 0 || idx > n {
            return Err(invalid(format!(
                "trigger-table key `{key}` names machine {idx} outside 1..={n}"
            )));
        }
        set.insert(idx - 1);
    }
    Ok(set)
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<ModelFile, ModelError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ModelError> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Resolves the file into an executable model.
    pub fn resolve(&self, name_hint: &str) -> Result<LoadedModel, ModelError> {
        let n = self.system.redundancy;
        if n == 0 {
            return Err(invalid("redundancy must be at least 1"));
        }
        if self.system.period <= 0.0 {
            return Err(invalid("period must be positive"));
        }
        let mut pattern = Pattern::new(n, self.pattern.arrays.clone(), self.pattern.env.clone())?;
        for action in &self.pattern.actions {
            for expanded in expand_action(action, n)? {
                pattern.push_action(&expanded)?;
            }
        }
        let mut system = GCASystem::new(pattern, self.system.period)?;

        // value domains
        let bounded_mode = match self.system.domain.as_deref() {
            None | Some("fault-abstraction") => false,
            Some("bounded-int") => true,
            Some(other) => {
                return Err(invalid(format!(
                    "unknown domain `{other}` (fault-abstraction or bounded-int)"
                )))
            }
        };
        for (name, (lo, hi)) in &self.domain_bounds {
            let var = system
                .pattern
                .var_id(name)
                .ok_or_else(|| invalid(format!("domain bound for unknown array `{name}`")))?;
            system.domains[var.0] = ValueDomain::bounded(*lo, *hi).map_err(invalid)?;
        }
        if bounded_mode && self.domain_bounds.is_empty() {
            return Err(invalid("bounded-int mode needs [domain_bounds]"));
        }

        if let Some(flush) = self.system.flush_queues_at_jump {
            system.flush_queues_at_jump = flush;
        }
        if let Some(names) = &self.system.machines {
            if names.len() != n {
                return Err(invalid(format!(
                    "{} machine names for redundancy {n}",
                    names.len()
                )));
            }
            let unique: BTreeSet<&String> = names.iter().collect();
            if unique.len() != n {
                return Err(invalid("machine names must be unique"));
            }
            system.machine_names = names.clone();
        }

        // initial values
        system.initial_values = system
            .domains
            .iter()
            .map(ValueDomain::default_value)
            .collect();
        for (name, literal) in &self.initial {
            let var = system
                .pattern
                .var_id(name)
                .ok_or_else(|| invalid(format!("initial value for unknown array `{name}`")))?;
            system.initial_values[var.0] = parse_value(literal).map_err(invalid)?;
        }
        for (name, literal) in &self.initial_env {
            let env = system
                .pattern
                .env_id(name)
                .ok_or_else(|| invalid(format!("initial value for unknown env var `{name}`")))?;
            system.initial_env[env.0] = parse_value(literal).map_err(invalid)?;
        }

        // environment update relation
        for (name, choices) in &self.env_update {
            let env = system
                .pattern
                .env_id(name)
                .ok_or_else(|| invalid(format!("env update for unknown env var `{name}`")))?;
            if choices.is_empty() {
                return Err(invalid(format!("env update for `{name}` has no choices")));
            }
            let templates = choices
                .iter()
                .map(|c| system.pattern.parse_expr(c))
                .collect::<Result<Vec<_>, _>>()?;
            system.set_env_update(EnvId(env.0), &templates)?;
        }

        // trigger table overrides
        let mut table = TriggerTable::default();
        for (key, responsible) in &self.trigger_table {
            let set = parse_faulty_set(key, n)?;
            if *responsible == 0 || *responsible > n {
                return Err(invalid(format!(
                    "trigger-table entry `{key}` names responsible machine {responsible} outside 1..={n}"
                )));
            }
            table.overrides.insert(set, responsible - 1);
        }
        system.trigger_table = table;

        // fault automaton
        let automaton = match &self.faults {
            None => FaultAutomaton::fault_free(),
            Some(section) => {
                let mut locations = Vec::new();
                let mut names = BTreeSet::new();
                for entry in &section.locations {
                    if !names.insert(entry.name.clone()) {
                        return Err(invalid(format!("duplicate location `{}`", entry.name)));
                    }
                    locations.push(Location {
                        name: entry.name.clone(),
                        activates: entry.activates.iter().cloned().collect(),
                    });
                }
                if locations.is_empty() {
                    return Err(invalid("[faults] declares no locations"));
                }
                let find = |name: &str| -> Result<usize, ModelError> {
                    locations
                        .iter()
                        .position(|l| l.name == name)
                        .ok_or_else(|| invalid(format!("unknown location `{name}`")))
                };
                let mut edges = BTreeSet::new();
                for edge in &section.edges {
                    let from = find(&edge.from)?;
                    for to in &edge.to {
                        edges.insert((from, find(to)?));
                    }
                }
                let initial = match &section.initial {
                    Some(list) => list
                        .iter()
                        .map(|name| find(name))
                        .collect::<Result<Vec<_>, _>>()?,
                    None => vec![0],
                };
                let mut faults = Vec::new();
                let declared_acts: BTreeSet<String> =
                    section.specs.iter().map(|s| s.act.clone()).collect();
                for location in &locations {
                    for flag in &location.activates {
                        if !declared_acts.contains(flag) {
                            return Err(invalid(format!(
                                "location `{}` activates undeclared fault `{flag}`",
                                location.name
                            )));
                        }
                    }
                }
                for entry in &section.specs {
                    let fault_type = parse_fault_type(&entry.fault_type)?;
                    if entry.machine == 0 || entry.position == 0 {
                        return Err(invalid(format!(
                            "fault `{}`: machine and position are 1-based",
                            entry.act
                        )));
                    }
                    let psi = match &entry.psi {
                        None => Psi::ForceErroneous,
                        Some(text) if text.trim() == "Erroneous" => Psi::ForceErroneous,
                        Some(text) => {
                            // the fault abstraction fixes the error function
                            if !bounded_mode {
                                return Err(invalid(format!(
                                    "fault `{}`: fault-abstraction mode forces psi = Erroneous",
                                    entry.act
                                )));
                            }
                            Psi::Map(PsiExpr::parse(text)?)
                        }
                    };
                    faults.push(FaultSpec {
                        act: entry.act.clone(),
                        fault_type,
                        machine: entry.machine - 1,
                        position: entry.position - 1,
                        k: entry.k.map(|k| k - 1),
                        k_prime: entry.k_prime.map(|k| k - 1),
                        psi,
                    });
                }
                let automaton = FaultAutomaton {
                    locations,
                    edges,
                    initial,
                    faults,
                    ltbf: None,
                };
                automaton.validate(&system)?;
                match section.ltbf {
                    Some(eta) => {
                        if eta <= 0.0 {
                            return Err(invalid("ltbf must be positive"));
                        }
                        let gated = gca_core::with_ltbf_gate(&automaton, eta, system.period);
                        gated.validate(&system)?;
                        gated
                    }
                    None => automaton,
                }
            }
        };

        // properties
        let mut properties = Vec::new();
        for (name, text) in &self.properties {
            let formula = parse_formula(text).map_err(|source| ModelError::Property {
                name: name.clone(),
                source,
            })?;
            properties.push((name.clone(), formula));
        }

        // timed schedule
        let schedule = match &self.schedule {
            None => None,
            Some(section) => {
                let k = system.k();
                let missing = ScheduleSlot {
                    start: f64::NAN,
                    end: f64::NAN,
                };
                let mut slots = vec![vec![missing; k]; n];
                for entry in &section.slots {
                    if entry.position == 0 || entry.position > k {
                        return Err(invalid(format!(
                            "schedule slot position {} outside 1..={k}",
                            entry.position
                        )));
                    }
                    let targets: Vec<usize> = match entry.machine {
                        Some(m) => {
                            if m == 0 || m > n {
                                return Err(invalid(format!(
                                    "schedule slot machine {m} outside 1..={n}"
                                )));
                            }
                            vec![m - 1]
                        }
                        None => (0..n).collect(),
                    };
                    for machine in targets {
                        slots[machine][entry.position - 1] = ScheduleSlot {
                            start: entry.start,
                            end: entry.end,
                        };
                    }
                }
                for (machine, row) in slots.iter().enumerate() {
                    for (position, slot) in row.iter().enumerate() {
                        if slot.start.is_nan() {
                            return Err(invalid(format!(
                                "schedule misses machine {} position {}",
                                machine + 1,
                                position + 1
                            )));
                        }
                    }
                }
                Some(TimedSchedule {
                    slots,
                    tau_net: section.tau_net,
                    period: system.period,
                })
            }
        };

        let name = self
            .system
            .name
            .clone()
            .unwrap_or_else(|| name_hint.to_string());
        Ok(LoadedModel {
            name,
            system,
            automaton,
            properties,
            schedule,
        })
    }
}

/// Reads and resolves a model file.
pub fn load_model(path: &Path) -> Result<LoadedModel, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file = ModelFile::parse(&text)?;
    let hint = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "model".to_string());
    file.resolve(&hint)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = r#"
[system]
name = "demo"
redundancy = 2
period = 10.0

[pattern]
arrays = ["a", "b"]
env = ["e"]
actions = ["a[x] <- e", "send(a[x])", "receive(a)", "b[x] <- a[x+1]"]

[initial_env]
e = "Correct"

[properties]
Mirrors = "G((m1.next = 0) -> (m1.b = Correct))"
"#;

    #[test]
    fn loads_a_minimal_model() {
        let model = ModelFile::parse(DEMO).unwrap().resolve("demo").unwrap();
        assert_eq!(model.system.n(), 2);
        assert_eq!(model.system.k(), 4);
        assert_eq!(model.automaton.locations.len(), 1, "fault-free default");
        assert_eq!(model.properties.len(), 1);
    }

    #[test]
    fn round_trips_through_toml() {
        let file = ModelFile::parse(DEMO).unwrap();
        let rendered = file.to_toml().unwrap();
        let reparsed = ModelFile::parse(&rendered).unwrap();
        assert_eq!(file, reparsed);
        assert_eq!(
            file.resolve("demo").unwrap(),
            reparsed.resolve("demo").unwrap(),
            "resolved models identical"
        );
    }

    #[test]
    fn macros_expand_to_plain_actions() {
        let got = expand_action(
            "TestPortAbsolute(port=Result, judge=Judge, status=Status)",
            3,
        )
        .unwrap();
        assert_eq!(
            got,
            vec![
                "send(Result[x])",
                "receive(Result)",
                "Judge[x] <- tpa1(Result[x], Result[x+1], Result[x+2])",
                "send(Judge[x])",
                "receive(Judge)",
                "Status[x] <- tpa2(Judge[x], Judge[x+1], Judge[x+2])",
            ]
        );
        let got = expand_action("MedianUnify(port=ErrorSum)", 3).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(
            got[2],
            "ErrorSum[x] <- median(ErrorSum[x], ErrorSum[x+1], ErrorSum[x+2])"
        );
        let got = expand_action("RedundancyTrigger(status=Status, out=Trigger)", 3).unwrap();
        assert_eq!(got, vec!["Trigger[x] <- trigger(Status[x])"]);
        let got = expand_action("TestLiveness(beacon=Alive, status=Live)", 2).unwrap();
        assert_eq!(got[0], "Alive[x] <- 1 + (-Alive[x])");
        // plain actions pass through
        let got = expand_action("a[x] <- e", 3).unwrap();
        assert_eq!(got, vec!["a[x] <- e"]);
        // unknown macros are treated as actions and fail in the pattern
        // parser, not silently
        assert!(expand_action("Frobnicate(port=a)", 3).unwrap()[0].starts_with("Frobnicate"));
    }

    #[test]
    fn schema_errors_carry_positions() {
        let err = ModelFile::parse("[system]\nredundancy = \"three\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "toml errors carry line info: {msg}");
    }

    #[test]
    fn unknown_names_are_rejected() {
        let bad = DEMO.replace("b[x] <- a[x+1]", "b[x] <- zz[x]");
        let err = ModelFile::parse(&bad).unwrap().resolve("demo").unwrap_err();
        assert!(err.to_string().contains("zz"));

        let bad = DEMO.replace(
            "Mirrors = \"G((m1.next = 0) -> (m1.b = Correct))\"",
            "Mirrors = \"G((m1.next = 0) -> \"",
        );
        let err = ModelFile::parse(&bad).unwrap().resolve("demo").unwrap_err();
        assert!(matches!(err, ModelError::Property { .. }));
    }

    #[test]
    fn bounded_int_mode_requires_bounds() {
        let bad = DEMO.replace("period = 10.0", "period = 10.0\ndomain = \"bounded-int\"");
        let err = ModelFile::parse(&bad).unwrap().resolve("demo").unwrap_err();
        assert!(err.to_string().contains("domain_bounds"));
    }

    #[test]
    fn psi_expressions_need_the_bounded_domain() {
        let faults = r#"
[faults]
initial = ["bad"]
[[faults.locations]]
name = "bad"
activates = ["f"]
[[faults.edges]]
from = "bad"
to = ["bad"]
[[faults.specs]]
act = "f"
type = "wrong-result"
machine = 1
position = 1
psi = "arg + 1"
"#;
        let err = ModelFile::parse(&format!("{DEMO}{faults}"))
            .unwrap()
            .resolve("demo")
            .unwrap_err();
        assert!(err.to_string().contains("psi"), "{err}");

        let bounded = DEMO
            .replace(
                "period = 10.0",
                "period = 10.0\ndomain = \"bounded-int\"\n\n[domain_bounds]\na = [0, 5]\nb = [0, 5]",
            )
            .replace("e = \"Correct\"", "e = \"1\"")
            .replace("(m1.b = Correct)", "(m1.b = 1)");
        let model = ModelFile::parse(&format!("{bounded}{faults}"))
            .unwrap()
            .resolve("demo")
            .unwrap();
        assert_eq!(model.automaton.faults.len(), 1);
    }

    #[test]
    fn trigger_table_keys_parse() {
        assert!(parse_faulty_set("none", 3).unwrap().is_empty());
        assert_eq!(parse_faulty_set("1,3", 3).unwrap(), BTreeSet::from([0, 2]));
        assert!(parse_faulty_set("0", 3).is_err());
        assert!(parse_faulty_set("4", 3).is_err());
    }
}
