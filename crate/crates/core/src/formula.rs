//! Local temporal properties: PLTL abstract syntax, parsing, the
//! admissibility check for preservation between asynchronous and
//! synchronized models, and evaluation over finite traces and lassos.
//!
//! Atom variables are machine-qualified: `m1.Result` is machine m1's own
//! slot, `m1.Result[2]` its stored copy of machine 2's value, `m1.next` its
//! next-action cursor (0 once the period sequence is finished). The parser
//! also accepts bare identifiers so schematic properties have an AST, but
//! admissibility requires every atom to resolve to one machine.

use crate::pattern::{EnvId, VarId};
use crate::semantics::{GCASystem, SystemConfig};
use crate::text::{lex, Cursor, Token};
use crate::trace::ProjectedState;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompareOp::Eq => write!(f, "="),
            CompareOp::Lt => write!(f, "<"),
            CompareOp::Le => write!(f, "<="),
            CompareOp::Gt => write!(f, ">"),
            CompareOp::Ge => write!(f, ">="),
        }
    }
}

/// A variable occurrence inside an atom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomVar {
    /// Machine name as written; `None` for bare identifiers.
    pub machine: Option<String>,
    pub kind: AtomVarKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomVarKind {
    /// `m.Var`: the machine's own slot of the array.
    OwnSlot(String),
    /// `m.Var[j]`: the machine's stored copy of slot `j` (0-based).
    Slot(String, usize),
    /// `m.next`: the next-action cursor (1-based position, 0 = finished).
    Next,
    /// `m.env.name`: an environment variable; never admissible.
    Env(String),
}

/// Arithmetic side of an atom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomExpr {
    Const(Value),
    Var(AtomVar),
    Add(Box<AtomExpr>, Box<AtomExpr>),
    Mul(Box<AtomExpr>, Box<AtomExpr>),
    Div(Box<AtomExpr>, Box<AtomExpr>),
    Neg(Box<AtomExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub lhs: AtomExpr,
    pub op: CompareOp,
    pub rhs: AtomExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Globally(Box<Formula>),
    Eventually(Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn size(&self) -> usize {
        match self {
            Formula::Atom(_) => 1,
            Formula::Not(a) | Formula::Globally(a) | Formula::Eventually(a) | Formula::Next(a) => {
                1 + a.size()
            }
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Until(a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::Atom(_) => true,
            Formula::Not(a) => a.is_propositional(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.is_propositional() && b.is_propositional()
            }
            Formula::Globally(_)
            | Formula::Eventually(_)
            | Formula::Next(_)
            | Formula::Until(..) => false,
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Atom>) {
            match f {
                Formula::Atom(a) => out.push(a),
                Formula::Not(a)
                | Formula::Globally(a)
                | Formula::Eventually(a)
                | Formula::Next(a) => walk(a, out),
                Formula::And(a, b)
                | Formula::Or(a, b)
                | Formula::Implies(a, b)
                | Formula::Until(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown machine `{0}`")]
    UnknownMachine(String),
    #[error("unknown variable `{machine}.{name}`")]
    UnknownVariable { machine: String, name: String },
    #[error("slot {slot} outside 1..={n} in `{var}`")]
    SlotOutOfRange { var: String, slot: usize, n: usize },
    #[error("atom variable `{0}` names no machine")]
    UnresolvedMachine(String),
    #[error("environment variables are not visible in projections: `{0}`")]
    EnvUnavailable(String),
    #[error("values {lhs} and {rhs} admit no order comparison")]
    Incomparable { lhs: Value, rhs: Value },
    #[error("cannot evaluate a formula over an empty structure")]
    EmptyStructure,
}

/// Why a formula is outside the preservation theorem's fragment.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("the next operator X is not stutter-closed: {0}")]
    UsesNext(String),
    #[error("atoms mix machines `{0}` and `{1}`; local properties describe one machine")]
    MixedMachines(String, String),
    #[error("atom over an environment variable: `{0}`")]
    EnvAtom(String),
    #[error("order comparison `{0}` is outside the preservation grammar (equality atoms only)")]
    OrderAtom(String),
    #[error("atom `{0}` compares two non-constant expressions; the grammar is exp = c")]
    NonConstantComparand(String),
    #[error("atom variable `{0}` names no machine and none can be inferred")]
    UnresolvedMachine(String),
    #[error(transparent)]
    Invalid(#[from] FormulaError),
}

/// A formula accepted for preservation checking: all atoms are local to one
/// machine (`None` when the formula is constant).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admissible {
    pub machine: Option<usize>,
}

pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let tokens = lex(text).map_err(|e| FormulaError::Syntax {
        pos: e.pos,
        msg: e.msg,
    })?;
    let mut cur = Cursor::new(&tokens, text.len());
    let formula = parse_implies(&mut cur)?;
    if !cur.at_end() {
        return Err(FormulaError::Syntax {
            pos: cur.pos(),
            msg: "trailing input after formula".to_string(),
        });
    }
    Ok(formula)
}

fn parse_implies(cur: &mut Cursor) -> Result<Formula, FormulaError> {
    let lhs = parse_until(cur)?;
    if cur.eat(&Token::Implies) {
        let rhs = parse_implies(cur)?;
        Ok(Formula::Implies(Box::new(lhs), Box::new(rhs)))
    } else {
        Ok(lhs)
    }
}

fn parse_until(cur: &mut Cursor) -> Result<Formula, FormulaError> {
    let lhs = parse_or(cur)?;
    if matches!(cur.peek(), Some(Token::Ident(name)) if name == "U") {
        cur.bump();
        let rhs = parse_until(cur)?;
        Ok(Formula::Until(Box::new(lhs), Box::new(rhs)))
    } else {
        Ok(lhs)
    }
}

fn parse_or(cur: &mut Cursor) -> Result<Formula, FormulaError> {
    let mut lhs = parse_and(cur)?;
    while cur.eat(&Token::Or) {
        let rhs = parse_and(cur)?;
        lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_and(cur: &mut Cursor) -> Result<Formula, FormulaError> {
    let mut lhs = parse_unary(cur)?;
    while cur.eat(&Token::And) {
        let rhs = parse_unary(cur)?;
        lhs = Formula::And(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_unary(cur: &mut Cursor) -> Result<Formula, FormulaError> {
    // an atom is a comparison of arithmetic expressions; try it first and
    // fall back to the formula forms on failure
    let save = cur.index;
    if let Ok(atom) = parse_atom(cur) {
        return Ok(Formula::Atom(atom));
    }
    cur.index = save;
    match cur.peek() {
        Some(Token::Not) => {
            cur.bump();
            let inner = parse_unary(cur)?;
            Ok(Formula::Not(Box::new(inner)))
        }
        Some(Token::Ident(name)) if name == "G" || name == "F" || name == "X" => {
            let op = name.clone();
            cur.bump();
            expect(cur, &Token::LParen)?;
            let inner = parse_implies(cur)?;
            expect(cur, &Token::RParen)?;
            Ok(match op.as_str() {
                "G" => Formula::Globally(Box::new(inner)),
                "F" => Formula::Eventually(Box::new(inner)),
                _ => Formula::Next(Box::new(inner)),
            })
        }
        Some(Token::LParen) => {
            cur.bump();
            let inner = parse_implies(cur)?;
            expect(cur, &Token::RParen)?;
            Ok(inner)
        }
        _ => Err(FormulaError::Syntax {
            pos: cur.pos(),
            msg: "expected formula".to_string(),
        }),
    }
}

fn parse_atom(cur: &mut Cursor) -> Result<Atom, FormulaError> {
    let lhs = parse_arith(cur)?;
    let op = match cur.peek() {
        Some(Token::Eq) => CompareOp::Eq,
        Some(Token::Lt) => CompareOp::Lt,
        Some(Token::Le) => CompareOp::Le,
        Some(Token::Gt) => CompareOp::Gt,
        Some(Token::Ge) => CompareOp::Ge,
        _ => {
            return Err(FormulaError::Syntax {
                pos: cur.pos(),
                msg: "expected comparison".to_string(),
            })
        }
    };
    cur.bump();
    let rhs = parse_arith(cur)?;
    Ok(Atom { lhs, op, rhs })
}

fn parse_arith(cur: &mut Cursor) -> Result<AtomExpr, FormulaError> {
    let mut lhs = parse_arith_term(cur)?;
    while cur.eat(&Token::Plus) {
        let rhs = parse_arith_term(cur)?;
        lhs = AtomExpr::Add(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_arith_term(cur: &mut Cursor) -> Result<AtomExpr, FormulaError> {
    let mut lhs = parse_arith_factor(cur)?;
    loop {
        if cur.eat(&Token::Star) {
            let rhs = parse_arith_factor(cur)?;
            lhs = AtomExpr::Mul(Box::new(lhs), Box::new(rhs));
        } else if cur.eat(&Token::Slash) {
            let rhs = parse_arith_factor(cur)?;
            lhs = AtomExpr::Div(Box::new(lhs), Box::new(rhs));
        } else {
            break;
        }
    }
    Ok(lhs)
}

fn parse_arith_factor(cur: &mut Cursor) -> Result<AtomExpr, FormulaError> {
    if cur.eat(&Token::Minus) {
        let inner = parse_arith_factor(cur)?;
        return Ok(AtomExpr::Neg(Box::new(inner)));
    }
    let pos = cur.pos();
    match cur.bump() {
        Some(Token::Int(v)) => Ok(AtomExpr::Const(Value::Int(v))),
        Some(Token::LParen) => {
            let first = parse_arith(cur)?;
            if cur.eat(&Token::Comma) {
                let mut items = vec![atom_const(&first, pos)?];
                loop {
                    let item = parse_arith(cur)?;
                    items.push(atom_const(&item, pos)?);
                    if !cur.eat(&Token::Comma) {
                        break;
                    }
                }
                expect(cur, &Token::RParen)?;
                Ok(AtomExpr::Const(Value::Tuple(items)))
            } else {
                expect(cur, &Token::RParen)?;
                Ok(first)
            }
        }
        Some(Token::Ident(name)) => match name.as_str() {
            "Correct" => Ok(AtomExpr::Const(Value::Correct)),
            "Erroneous" => Ok(AtomExpr::Const(Value::Erroneous)),
            _ => {
                if cur.eat(&Token::Dot) {
                    let field_pos = cur.pos();
                    match cur.bump() {
                        Some(Token::Ident(field)) if field == "next" => {
                            Ok(AtomExpr::Var(AtomVar {
                                machine: Some(name),
                                kind: AtomVarKind::Next,
                            }))
                        }
                        Some(Token::Ident(field)) if field == "env" => {
                            expect(cur, &Token::Dot)?;
                            match cur.bump() {
                                Some(Token::Ident(env)) => Ok(AtomExpr::Var(AtomVar {
                                    machine: Some(name),
                                    kind: AtomVarKind::Env(env),
                                })),
                                _ => Err(FormulaError::Syntax {
                                    pos: field_pos,
                                    msg: "expected environment variable name".to_string(),
                                }),
                            }
                        }
                        Some(Token::Ident(field)) => {
                            if cur.eat(&Token::LBracket) {
                                let slot_pos = cur.pos();
                                let slot = match cur.bump() {
                                    Some(Token::Int(v)) if v >= 1 => v as usize - 1,
                                    _ => {
                                        return Err(FormulaError::Syntax {
                                            pos: slot_pos,
                                            msg: "expected 1-based slot index".to_string(),
                                        })
                                    }
                                };
                                expect(cur, &Token::RBracket)?;
                                Ok(AtomExpr::Var(AtomVar {
                                    machine: Some(name),
                                    kind: AtomVarKind::Slot(field, slot),
                                }))
                            } else {
                                Ok(AtomExpr::Var(AtomVar {
                                    machine: Some(name),
                                    kind: AtomVarKind::OwnSlot(field),
                                }))
                            }
                        }
                        _ => Err(FormulaError::Syntax {
                            pos: field_pos,
                            msg: "expected field after `.`".to_string(),
                        }),
                    }
                } else {
                    Ok(AtomExpr::Var(AtomVar {
                        machine: None,
                        kind: AtomVarKind::OwnSlot(name),
                    }))
                }
            }
        },
        _ => Err(FormulaError::Syntax {
            pos,
            msg: "expected arithmetic expression".to_string(),
        }),
    }
}

fn atom_const(expr: &AtomExpr, pos: usize) -> Result<Value, FormulaError> {
    match expr {
        AtomExpr::Const(v) => Ok(v.clone()),
        AtomExpr::Neg(inner) => Ok(atom_const(inner, pos)?.neg()),
        _ => Err(FormulaError::Syntax {
            pos,
            msg: "tuple literals must have constant elements".to_string(),
        }),
    }
}

fn expect(cur: &mut Cursor, token: &Token) -> Result<(), FormulaError> {
    let pos = cur.pos();
    if cur.eat(token) {
        Ok(())
    } else {
        Err(FormulaError::Syntax {
            pos,
            msg: format!("expected `{token}`"),
        })
    }
}

impl fmt::Display for AtomVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let machine = self.machine.as_deref().unwrap_or("");
        let dot = if self.machine.is_some() { "." } else { "" };
        match &self.kind {
            AtomVarKind::OwnSlot(v) => write!(f, "{machine}{dot}{v}"),
            AtomVarKind::Slot(v, s) => write!(f, "{machine}{dot}{v}[{}]", s + 1),
            AtomVarKind::Next => write!(f, "{machine}{dot}next"),
            AtomVarKind::Env(v) => write!(f, "{machine}{dot}env.{v}"),
        }
    }
}

impl fmt::Display for AtomExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomExpr::Const(v) => write!(f, "{v}"),
            AtomExpr::Var(v) => write!(f, "{v}"),
            AtomExpr::Add(a, b) => write!(f, "({a} + {b})"),
            AtomExpr::Mul(a, b) => write!(f, "({a} * {b})"),
            AtomExpr::Div(a, b) => write!(f, "({a} / {b})"),
            AtomExpr::Neg(a) => write!(f, "-({a})"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(a) => write!(f, "{} {} {}", a.lhs, a.op, a.rhs),
            Formula::Not(a) => write!(f, "!({a})"),
            Formula::And(a, b) => write!(f, "(({a}) & ({b}))"),
            Formula::Or(a, b) => write!(f, "(({a}) | ({b}))"),
            Formula::Implies(a, b) => write!(f, "(({a}) -> ({b}))"),
            Formula::Globally(a) => write!(f, "G({a})"),
            Formula::Eventually(a) => write!(f, "F({a})"),
            Formula::Next(a) => write!(f, "X({a})"),
            Formula::Until(a, b) => write!(f, "(({a}) U ({b}))"),
        }
    }
}

/// Checks the preservation-theorem constraints: no X operator, every atom a
/// predicate `exp = c` over a single machine's variables and cursor (no
/// queues, no environment). Returns that machine.
pub fn check_admissible(formula: &Formula, system: &GCASystem) -> Result<Admissible, Rejection> {
    check_no_next(formula)?;
    let mut machine: Option<(usize, String)> = None;
    for atom in formula.atoms() {
        // the preservation grammar is exp = c: equality with one constant side
        if atom.op != CompareOp::Eq {
            return Err(Rejection::OrderAtom(format!(
                "{} {} {}",
                atom.lhs, atom.op, atom.rhs
            )));
        }
        let lhs_const = expr_is_const(&atom.lhs);
        let rhs_const = expr_is_const(&atom.rhs);
        if !lhs_const && !rhs_const {
            return Err(Rejection::NonConstantComparand(format!(
                "{} = {}",
                atom.lhs, atom.rhs
            )));
        }
        for expr in [&atom.lhs, &atom.rhs] {
            collect_machine(expr, system, &mut machine)?;
        }
    }
    Ok(Admissible {
        machine: machine.map(|(idx, _)| idx),
    })
}

fn check_no_next(formula: &Formula) -> Result<(), Rejection> {
    match formula {
        Formula::Next(inner) => Err(Rejection::UsesNext(format!("X({inner})"))),
        Formula::Atom(_) => Ok(()),
        Formula::Not(a) | Formula::Globally(a) | Formula::Eventually(a) => check_no_next(a),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Until(a, b) => {
            check_no_next(a)?;
            check_no_next(b)
        }
    }
}

fn expr_is_const(expr: &AtomExpr) -> bool {
    match expr {
        AtomExpr::Const(_) => true,
        AtomExpr::Var(_) => false,
        AtomExpr::Add(a, b) | AtomExpr::Mul(a, b) | AtomExpr::Div(a, b) => {
            expr_is_const(a) && expr_is_const(b)
        }
        AtomExpr::Neg(a) => expr_is_const(a),
    }
}

fn collect_machine(
    expr: &AtomExpr,
    system: &GCASystem,
    machine: &mut Option<(usize, String)>,
) -> Result<(), Rejection> {
    match expr {
        AtomExpr::Const(_) => Ok(()),
        AtomExpr::Var(var) => {
            if let AtomVarKind::Env(_) = var.kind {
                return Err(Rejection::EnvAtom(var.to_string()));
            }
            let name = var
                .machine
                .as_ref()
                .ok_or_else(|| Rejection::UnresolvedMachine(var.to_string()))?;
            let idx = system
                .machine_index(name)
                .ok_or_else(|| Rejection::Invalid(FormulaError::UnknownMachine(name.clone())))?;
            // validate variable existence and slot bounds up front
            match &var.kind {
                AtomVarKind::OwnSlot(v) | AtomVarKind::Slot(v, _) => {
                    let _ = system.pattern.var_id(v).ok_or_else(|| {
                        Rejection::Invalid(FormulaError::UnknownVariable {
                            machine: name.clone(),
                            name: v.clone(),
                        })
                    })?;
                    if let AtomVarKind::Slot(_, slot) = &var.kind {
                        if *slot >= system.n() {
                            return Err(Rejection::Invalid(FormulaError::SlotOutOfRange {
                                var: var.to_string(),
                                slot: slot + 1,
                                n: system.n(),
                            }));
                        }
                    }
                }
                AtomVarKind::Next => {}
                AtomVarKind::Env(_) => unreachable!("rejected above"),
            }
            match machine {
                None => {
                    *machine = Some((idx, name.clone()));
                    Ok(())
                }
                Some((prev, prev_name)) if *prev == idx => {
                    let _ = prev_name;
                    Ok(())
                }
                Some((_, prev_name)) => {
                    Err(Rejection::MixedMachines(prev_name.clone(), name.clone()))
                }
            }
        }
        AtomExpr::Add(a, b) | AtomExpr::Mul(a, b) | AtomExpr::Div(a, b) => {
            collect_machine(a, system, machine)?;
            collect_machine(b, system, machine)
        }
        AtomExpr::Neg(a) => collect_machine(a, system, machine),
    }
}

/// Anything a formula can be evaluated against: full configurations or
/// one-machine projections.
pub trait AtomState {
    fn slot(&self, machine: usize, var: VarId, slot: usize) -> Option<Value>;
    fn next_of(&self, machine: usize) -> Option<Value>;
    fn env_of(&self, machine: usize, env: EnvId) -> Option<Value>;
}

impl<T: AtomState + ?Sized> AtomState for &T {
    fn slot(&self, machine: usize, var: VarId, slot: usize) -> Option<Value> {
        (**self).slot(machine, var, slot)
    }

    fn next_of(&self, machine: usize) -> Option<Value> {
        (**self).next_of(machine)
    }

    fn env_of(&self, machine: usize, env: EnvId) -> Option<Value> {
        (**self).env_of(machine, env)
    }
}

impl AtomState for SystemConfig {
    fn slot(&self, machine: usize, var: VarId, slot: usize) -> Option<Value> {
        self.machines
            .get(machine)
            .and_then(|m| m.values.get(var.0))
            .and_then(|arr| arr.get(slot))
            .cloned()
    }

    fn next_of(&self, machine: usize) -> Option<Value> {
        self.machines.get(machine).map(|m| m.next_value())
    }

    fn env_of(&self, machine: usize, env: EnvId) -> Option<Value> {
        self.machines
            .get(machine)
            .and_then(|m| m.env.get(env.0))
            .cloned()
    }
}

/// A projected state exposed as the view of its fixed machine.
pub struct ProjectedView<'a> {
    pub machine: usize,
    pub state: &'a ProjectedState,
}

impl AtomState for ProjectedView<'_> {
    fn slot(&self, machine: usize, var: VarId, slot: usize) -> Option<Value> {
        if machine != self.machine {
            return None;
        }
        self.state
            .values
            .get(var.0)
            .and_then(|arr| arr.get(slot))
            .cloned()
    }

    fn next_of(&self, machine: usize) -> Option<Value> {
        (machine == self.machine).then(|| self.state.next_value())
    }

    fn env_of(&self, _machine: usize, _env: EnvId) -> Option<Value> {
        None
    }
}

fn eval_atom_expr<S: AtomState>(
    expr: &AtomExpr,
    system: &GCASystem,
    state: &S,
) -> Result<Value, FormulaError> {
    match expr {
        AtomExpr::Const(v) => Ok(v.clone()),
        AtomExpr::Var(var) => {
            let name = var
                .machine
                .as_ref()
                .ok_or_else(|| FormulaError::UnresolvedMachine(var.to_string()))?;
            let machine = system
                .machine_index(name)
                .ok_or_else(|| FormulaError::UnknownMachine(name.clone()))?;
            match &var.kind {
                AtomVarKind::OwnSlot(v) | AtomVarKind::Slot(v, _) => {
                    let var_id =
                        system
                            .pattern
                            .var_id(v)
                            .ok_or_else(|| FormulaError::UnknownVariable {
                                machine: name.clone(),
                                name: v.clone(),
                            })?;
                    let slot = match &var.kind {
                        AtomVarKind::Slot(_, s) => *s,
                        _ => machine,
                    };
                    state
                        .slot(machine, var_id, slot)
                        .ok_or_else(|| FormulaError::SlotOutOfRange {
                            var: var.to_string(),
                            slot: slot + 1,
                            n: system.n(),
                        })
                }
                AtomVarKind::Next => state
                    .next_of(machine)
                    .ok_or_else(|| FormulaError::UnknownMachine(name.clone())),
                AtomVarKind::Env(e) => {
                    let env_id =
                        system
                            .pattern
                            .env_id(e)
                            .ok_or_else(|| FormulaError::UnknownVariable {
                                machine: name.clone(),
                                name: e.clone(),
                            })?;
                    state
                        .env_of(machine, env_id)
                        .ok_or_else(|| FormulaError::EnvUnavailable(var.to_string()))
                }
            }
        }
        AtomExpr::Add(a, b) => {
            Ok(eval_atom_expr(a, system, state)?.add(&eval_atom_expr(b, system, state)?))
        }
        AtomExpr::Mul(a, b) => {
            Ok(eval_atom_expr(a, system, state)?.mul(&eval_atom_expr(b, system, state)?))
        }
        AtomExpr::Div(a, b) => {
            Ok(eval_atom_expr(a, system, state)?.div(&eval_atom_expr(b, system, state)?))
        }
        AtomExpr::Neg(a) => Ok(eval_atom_expr(a, system, state)?.neg()),
    }
}

/// Evaluates one atom against one state.
pub fn eval_atom<S: AtomState>(
    atom: &Atom,
    system: &GCASystem,
    state: &S,
) -> Result<bool, FormulaError> {
    let lhs = eval_atom_expr(&atom.lhs, system, state)?;
    let rhs = eval_atom_expr(&atom.rhs, system, state)?;
    match atom.op {
        CompareOp::Eq => Ok(lhs == rhs),
        op => match (lhs.as_int(), rhs.as_int()) {
            (Some(a), Some(b)) => Ok(match op {
                CompareOp::Lt => a < b,
                CompareOp::Le => a <= b,
                CompareOp::Gt => a > b,
                CompareOp::Ge => a >= b,
                CompareOp::Eq => unreachable!(),
            }),
            _ => Err(FormulaError::Incomparable { lhs, rhs }),
        },
    }
}

/// Evaluates a formula over a state sequence. `loop_to = Some(l)` closes the
/// sequence into a lasso back to position `l`; `None` applies the stationary
/// extension (the final state repeats forever).
pub fn eval_formula<S: AtomState>(
    system: &GCASystem,
    formula: &Formula,
    states: &[S],
    loop_to: Option<usize>,
) -> Result<bool, FormulaError> {
    if states.is_empty() {
        return Err(FormulaError::EmptyStructure);
    }
    let m = states.len();
    let succ = |i: usize| -> usize {
        if i + 1 < m {
            i + 1
        } else {
            loop_to.unwrap_or(m - 1)
        }
    };
    // truth vector per subformula, bottom-up
    fn truth<S: AtomState>(
        formula: &Formula,
        system: &GCASystem,
        states: &[S],
        succ: &dyn Fn(usize) -> usize,
    ) -> Result<Vec<bool>, FormulaError> {
        let m = states.len();
        Ok(match formula {
            Formula::Atom(atom) => states
                .iter()
                .map(|s| eval_atom(atom, system, s))
                .collect::<Result<_, _>>()?,
            Formula::Not(a) => truth(a, system, states, succ)?
                .into_iter()
                .map(|b| !b)
                .collect(),
            Formula::And(a, b) => {
                let (a, b) = (
                    truth(a, system, states, succ)?,
                    truth(b, system, states, succ)?,
                );
                a.into_iter().zip(b).map(|(x, y)| x && y).collect()
            }
            Formula::Or(a, b) => {
                let (a, b) = (
                    truth(a, system, states, succ)?,
                    truth(b, system, states, succ)?,
                );
                a.into_iter().zip(b).map(|(x, y)| x || y).collect()
            }
            Formula::Implies(a, b) => {
                let (a, b) = (
                    truth(a, system, states, succ)?,
                    truth(b, system, states, succ)?,
                );
                a.into_iter().zip(b).map(|(x, y)| !x || y).collect()
            }
            Formula::Next(a) => {
                let inner = truth(a, system, states, succ)?;
                (0..m).map(|i| inner[succ(i)]).collect()
            }
            Formula::Globally(a) => {
                // greatest fixpoint of v[i] = p[i] && v[succ(i)]
                let p = truth(a, system, states, succ)?;
                let mut v = vec![true; m];
                loop {
                    let mut changed = false;
                    for i in (0..m).rev() {
                        let new = p[i] && v[succ(i)];
                        if new != v[i] {
                            v[i] = new;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                v
            }
            Formula::Eventually(a) => {
                // least fixpoint of v[i] = q[i] || v[succ(i)]
                let q = truth(a, system, states, succ)?;
                let mut v = vec![false; m];
                loop {
                    let mut changed = false;
                    for i in (0..m).rev() {
                        let new = q[i] || v[succ(i)];
                        if new != v[i] {
                            v[i] = new;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                v
            }
            Formula::Until(a, b) => {
                // least fixpoint of v[i] = q[i] || (p[i] && v[succ(i)])
                let p = truth(a, system, states, succ)?;
                let q = truth(b, system, states, succ)?;
                let mut v = vec![false; m];
                loop {
                    let mut changed = false;
                    for i in (0..m).rev() {
                        let new = q[i] || (p[i] && v[succ(i)]);
                        if new != v[i] {
                            v[i] = new;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                v
            }
        })
    }
    Ok(truth(formula, system, states, &succ)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::Pattern;
    use crate::value::Value;

    fn tiny_system(n: usize) -> GCASystem {
        let mut p = Pattern::new(
            n,
            vec!["a".into(), "b".into(), "Trigger".into()],
            vec!["s".into()],
        )
        .unwrap();
        p.push_action("a[x] <- s").unwrap();
        GCASystem::new(p, 1.0).unwrap()
    }

    fn cfg_with(system: &GCASystem, a: i64, b: i64) -> SystemConfig {
        let mut cfg = system.initial_config();
        for m in 0..system.n() {
            cfg.machines[m].values[0][m] = Value::Int(a);
            cfg.machines[m].values[1][m] = Value::Int(b);
        }
        cfg
    }

    #[test]
    fn parses_implication_under_globally() {
        let f = parse_formula("G((trigger = 0) -> (Result = 0))").unwrap();
        match f {
            Formula::Globally(inner) => assert!(matches!(*inner, Formula::Implies(..))),
            other => panic!("expected G(->), got {other}"),
        }
    }

    #[test]
    fn parses_tautology_shape() {
        let f = parse_formula("G(x = x)").unwrap();
        assert_eq!(f.size(), 2);
        assert!(matches!(f, Formula::Globally(_)));
    }

    #[test]
    fn parser_reports_positions() {
        let err = parse_formula("G((a = 0) -> )").unwrap_err();
        assert!(matches!(err, FormulaError::Syntax { .. }));
        let err = parse_formula("").unwrap_err();
        assert!(matches!(err, FormulaError::Syntax { .. }));
    }

    #[test]
    fn admissibility_returns_the_common_machine() {
        let sys = tiny_system(3);
        let f = parse_formula("G((m2.a = 1) -> (m2.b = 2))").unwrap();
        assert_eq!(check_admissible(&f, &sys).unwrap().machine, Some(1));
        // next-cursor atoms stay within the machine
        let f = parse_formula("G((m2.next = 0) -> (m2.a = 1))").unwrap();
        assert_eq!(check_admissible(&f, &sys).unwrap().machine, Some(1));
    }

    #[test]
    fn admissibility_rejects_next_operator() {
        let sys = tiny_system(2);
        let f = parse_formula("X(m1.a = 1)").unwrap();
        assert!(matches!(
            check_admissible(&f, &sys),
            Err(Rejection::UsesNext(_))
        ));
    }

    #[test]
    fn admissibility_rejects_mixed_machines() {
        let sys = tiny_system(2);
        let f = parse_formula("G((m1.a = 1) & (m2.a = 1))").unwrap();
        assert!(matches!(
            check_admissible(&f, &sys),
            Err(Rejection::MixedMachines(..))
        ));
    }

    #[test]
    fn admissibility_rejects_env_and_order_atoms() {
        let sys = tiny_system(2);
        let f = parse_formula("G(m1.env.s = 1)").unwrap();
        assert!(matches!(
            check_admissible(&f, &sys),
            Err(Rejection::EnvAtom(_))
        ));
        let f = parse_formula("G(m1.a < 3)").unwrap();
        assert!(matches!(
            check_admissible(&f, &sys),
            Err(Rejection::OrderAtom(_))
        ));
        let f = parse_formula("G(m1.a = m1.b)").unwrap();
        assert!(matches!(
            check_admissible(&f, &sys),
            Err(Rejection::NonConstantComparand(_))
        ));
        let f = parse_formula("G(bare = 1)").unwrap();
        assert!(matches!(
            check_admissible(&f, &sys),
            Err(Rejection::UnresolvedMachine(_))
        ));
    }

    #[test]
    fn constant_formula_is_admissible_without_machine() {
        let sys = tiny_system(2);
        let f = parse_formula("G(1 = 1)").unwrap();
        assert_eq!(check_admissible(&f, &sys).unwrap().machine, None);
    }

    #[test]
    fn globally_on_all_correct_lasso() {
        let sys = tiny_system(1);
        let f = parse_formula("G(m1.a = 7)").unwrap();
        let states = vec![cfg_with(&sys, 7, 0), cfg_with(&sys, 7, 1)];
        assert!(eval_formula(&sys, &f, &states, Some(0)).unwrap());
        let f = parse_formula("G(m1.a = 8)").unwrap();
        assert!(!eval_formula(&sys, &f, &states, Some(0)).unwrap());
    }

    #[test]
    fn eventually_with_stationary_extension() {
        let sys = tiny_system(1);
        // a flips to 9 in the second state and the trace ends
        let states = vec![cfg_with(&sys, 1, 0), cfg_with(&sys, 9, 0)];
        let f = parse_formula("F(m1.a = 9)").unwrap();
        assert!(eval_formula(&sys, &f, &states, None).unwrap());
        let f = parse_formula("F(m1.a = 5)").unwrap();
        assert!(!eval_formula(&sys, &f, &states, None).unwrap());
        // G(F(..)) on the stationary extension sees only the final state
        let f = parse_formula("G(F(m1.a = 1))").unwrap();
        assert!(!eval_formula(&sys, &f, &states, None).unwrap());
        let f = parse_formula("G(F(m1.a = 9))").unwrap();
        assert!(eval_formula(&sys, &f, &states, None).unwrap());
    }

    #[test]
    fn until_requires_the_left_side_to_hold() {
        let sys = tiny_system(1);
        let states = vec![
            cfg_with(&sys, 1, 0),
            cfg_with(&sys, 1, 0),
            cfg_with(&sys, 2, 0),
        ];
        let f = parse_formula("(m1.a = 1) U (m1.a = 2)").unwrap();
        assert!(eval_formula(&sys, &f, &states, None).unwrap());
        let states = vec![
            cfg_with(&sys, 1, 0),
            cfg_with(&sys, 3, 0),
            cfg_with(&sys, 2, 0),
        ];
        assert!(!eval_formula(&sys, &f, &states, None).unwrap());
    }

    #[test]
    fn atom_evaluation_on_unknown_variable_is_a_model_error() {
        let sys = tiny_system(1);
        let f = parse_formula("G(m1.nope = 1)").unwrap();
        let states = vec![cfg_with(&sys, 1, 0)];
        assert!(matches!(
            eval_formula(&sys, &f, &states, None),
            Err(FormulaError::UnknownVariable { .. })
        ));
        let f = parse_formula("G(m9.a = 1)").unwrap();
        assert!(matches!(
            eval_formula(&sys, &f, &states, None),
            Err(FormulaError::UnknownMachine(_))
        ));
    }

    // deterministic pseudo-random formula generator shared with the oracle test
    pub(super) fn gen_formula(rng: &mut impl rand::Rng, depth: usize) -> Formula {
        let atom = |rng: &mut dyn rand::RngCore| {
            let var = ["a", "b"][(rng.next_u32() % 2) as usize];
            let c = (rng.next_u32() % 3) as i64;
            Formula::Atom(Atom {
                lhs: AtomExpr::Var(AtomVar {
                    machine: Some("m1".to_string()),
                    kind: AtomVarKind::OwnSlot(var.to_string()),
                }),
                op: CompareOp::Eq,
                rhs: AtomExpr::Const(Value::Int(c)),
            })
        };
        if depth == 0 {
            return atom(rng);
        }
        match rng.gen_range(0..8) {
            0 => atom(rng),
            1 => Formula::Not(Box::new(gen_formula(rng, depth - 1))),
            2 => Formula::And(
                Box::new(gen_formula(rng, depth - 1)),
                Box::new(gen_formula(rng, depth - 1)),
            ),
            3 => Formula::Or(
                Box::new(gen_formula(rng, depth - 1)),
                Box::new(gen_formula(rng, depth - 1)),
            ),
            4 => Formula::Implies(
                Box::new(gen_formula(rng, depth - 1)),
                Box::new(gen_formula(rng, depth - 1)),
            ),
            5 => Formula::Globally(Box::new(gen_formula(rng, depth - 1))),
            6 => Formula::Eventually(Box::new(gen_formula(rng, depth - 1))),
            _ => Formula::Until(
                Box::new(gen_formula(rng, depth - 1)),
                Box::new(gen_formula(rng, depth - 1)),
            ),
        }
    }

    #[test]
    fn print_parse_round_trip_on_generated_corpus() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let f = gen_formula(&mut rng, 3);
            let printed = f.to_string();
            let reparsed = parse_formula(&printed)
                .unwrap_or_else(|e| panic!("reparse failed on `{printed}`: {e}"));
            assert_eq!(reparsed, f, "round trip on `{printed}`");
        }
    }

    #[test]
    fn admissible_formulas_are_stutter_closed() {
        // duplicating states (stuttering) never changes the verdict of a
        // next-free formula: the executable core of the preservation proof
        use rand::{Rng, SeedableRng};
        let sys = tiny_system(1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for round in 0..200 {
            let formula = gen_formula(&mut rng, 3);
            if check_admissible(&formula, &sys).is_err() {
                continue;
            }
            let len = rng.gen_range(1..=6usize);
            let states: Vec<SystemConfig> = (0..len)
                .map(|_| cfg_with(&sys, rng.gen_range(0..3), rng.gen_range(0..3)))
                .collect();
            let mut stuttered = Vec::new();
            for state in &states {
                for _ in 0..rng.gen_range(1..=3usize) {
                    stuttered.push(state.clone());
                }
            }
            let plain = eval_formula(&sys, &formula, &states, None).unwrap();
            let padded = eval_formula(&sys, &formula, &stuttered, None).unwrap();
            assert_eq!(plain, padded, "round {round}: {formula}");
        }
    }

    /// Independent oracle: evaluates by unrolling the lasso step by step,
    /// walking forward `2 * |states| * |formula|` steps for each temporal
    /// operator instead of solving fixpoints.
    fn oracle<S: AtomState>(
        system: &GCASystem,
        formula: &Formula,
        states: &[S],
        loop_to: Option<usize>,
        pos: usize,
        bound: usize,
    ) -> bool {
        let m = states.len();
        let succ = |i: usize| {
            if i + 1 < m {
                i + 1
            } else {
                loop_to.unwrap_or(m - 1)
            }
        };
        match formula {
            Formula::Atom(a) => eval_atom(a, system, &states[pos]).unwrap(),
            Formula::Not(a) => !oracle(system, a, states, loop_to, pos, bound),
            Formula::And(a, b) => {
                oracle(system, a, states, loop_to, pos, bound)
                    && oracle(system, b, states, loop_to, pos, bound)
            }
            Formula::Or(a, b) => {
                oracle(system, a, states, loop_to, pos, bound)
                    || oracle(system, b, states, loop_to, pos, bound)
            }
            Formula::Implies(a, b) => {
                !oracle(system, a, states, loop_to, pos, bound)
                    || oracle(system, b, states, loop_to, pos, bound)
            }
            Formula::Next(a) => oracle(system, a, states, loop_to, succ(pos), bound),
            Formula::Globally(a) => {
                let mut at = pos;
                for _ in 0..bound {
                    if !oracle(system, a, states, loop_to, at, bound) {
                        return false;
                    }
                    at = succ(at);
                }
                true
            }
            Formula::Eventually(a) => {
                let mut at = pos;
                for _ in 0..bound {
                    if oracle(system, a, states, loop_to, at, bound) {
                        return true;
                    }
                    at = succ(at);
                }
                false
            }
            Formula::Until(a, b) => {
                let mut at = pos;
                for _ in 0..bound {
                    if oracle(system, b, states, loop_to, at, bound) {
                        return true;
                    }
                    if !oracle(system, a, states, loop_to, at, bound) {
                        return false;
                    }
                    at = succ(at);
                }
                false
            }
        }
    }

    #[test]
    fn evaluation_matches_the_unrolling_oracle() {
        use rand::{Rng, SeedableRng};
        let sys = tiny_system(1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20260809);
        for round in 0..300 {
            let formula = gen_formula(&mut rng, 3);
            let len = rng.gen_range(1..=8usize);
            let states: Vec<SystemConfig> = (0..len)
                .map(|_| cfg_with(&sys, rng.gen_range(0..3), rng.gen_range(0..3)))
                .collect();
            let loop_to = if rng.gen_bool(0.5) {
                Some(rng.gen_range(0..len))
            } else {
                None
            };
            let bound = 2 * states.len() * formula.size() + 1;
            let fast = eval_formula(&sys, &formula, &states, loop_to).unwrap();
            let slow = oracle(&sys, &formula, &states, loop_to, 0, bound);
            assert_eq!(
                fast, slow,
                "round {round}: {formula} on {len} states loop {loop_to:?}"
            );
        }
    }
}
